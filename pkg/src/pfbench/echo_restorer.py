"""Trivial external restorer: copies the PNG on stdin to stdout unchanged.

Used to exercise the subprocess protocol end to end (``pf-echo-restorer``). The task
document on descriptor 3 is read and checked against ``PF_TASK_JSON`` so that both
channels are covered.
"""

import json
import os
import sys


def main():
    try:
        with os.fdopen(3, "rb") as fh:
            task = json.loads(fh.read())
    except OSError:
        task = None
    env = os.environ.get("PF_TASK_JSON")
    if task is not None and env is not None and json.loads(env) != task:
        print("task on fd 3 differs from PF_TASK_JSON", file=sys.stderr)
        return 1
    sys.stdout.buffer.write(sys.stdin.buffer.read())
    sys.stdout.buffer.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
