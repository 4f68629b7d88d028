"""Benchmark task kinds, built-in baseline restorers and the external-restorer bridge.

External restorer protocol
--------------------------
The child process is started with:

* the task as a JSON document readable on file descriptor 3 and also in the
  ``PF_TASK_JSON`` environment variable,
* the degraded image as an 8-bit PNG on standard input.

It must write exactly one 8-bit PNG to standard output and exit with status 0.
"""

import hashlib
import json
import os
import shlex
import subprocess
import sys
from dataclasses import dataclass

import numpy as np

from .degrade import (
    Blur,
    BlurParams,
    DegradationSpec,
    Downscale,
    Noise,
    NoiseParams,
    ResampleMethod,
    resample,
)
from .errors import DataError, ExternalFailure, PfError, ShapeViolation
from .image_core import as_f32, decode_image, encode_png, f32_to_u8, u8_to_f32

__all__ = [
    "SR",
    "Deblur",
    "Denoise",
    "Coupled",
    "VirtualStain",
    "task_from_dict",
    "task_scale",
    "task_steps",
    "Identity",
    "ResampleSR",
    "External",
    "parse_restorer",
    "restore",
]


@dataclass(frozen=True)
class SR:
    scale: int

    def to_dict(self):
        return {"kind": "sr", "scale": self.scale}

    @property
    def key(self):
        return f"sr_x{self.scale}"


@dataclass(frozen=True)
class Deblur:
    kernel_size: int
    sigma1: float
    sigma2: float
    theta: float = 0.0

    def to_dict(self):
        return {"kind": "deblur", "kernel_size": self.kernel_size, "sigma1": self.sigma1,
                "sigma2": self.sigma2, "theta": self.theta}

    @property
    def key(self):
        key = f"deblur_k{self.kernel_size}_s{self.sigma1:g}"
        if self.sigma2 != self.sigma1 or self.theta:
            key += f"_{self.sigma2:g}_t{self.theta:.3f}"
        return key


@dataclass(frozen=True)
class Denoise:
    sigma_255: float

    def to_dict(self):
        return {"kind": "denoise", "sigma_255": self.sigma_255}

    @property
    def key(self):
        return f"denoise_s{self.sigma_255:g}"


@dataclass(frozen=True)
class Coupled:
    spec: DegradationSpec

    def to_dict(self):
        return {"kind": "coupled", "spec": self.spec.to_dict()}

    @property
    def key(self):
        parts = []
        for st in self.spec.steps:
            if isinstance(st, Blur):
                parts.append(f"b{st.params.sigma1:g}")
            elif isinstance(st, Downscale):
                parts.append(f"x{st.factor}")
            else:
                parts.append(f"n{st.params.gaussian_sigma:g}")
        digest = hashlib.blake2b(json.dumps(self.spec.to_dict(), sort_keys=True).encode(), digest_size=3)
        return "coupled_" + "_".join(parts) + "_" + digest.hexdigest()


@dataclass(frozen=True)
class VirtualStain:
    source_stain: str
    target_stain: str

    def to_dict(self):
        return {"kind": "virtual_stain", "source_stain": self.source_stain, "target_stain": self.target_stain}

    @property
    def key(self):
        return f"vs_{self.source_stain}_to_{self.target_stain}".replace("&", "").replace(" ", "")


def task_from_dict(d):
    kind = d.get("kind")
    if kind == "sr":
        scale = int(d["scale"])
        if scale < 1:
            raise DataError("SR scale must be >= 1")
        return SR(scale)
    if kind == "deblur":
        return Deblur(int(d["kernel_size"]), float(d["sigma1"]), float(d.get("sigma2", d["sigma1"])),
                      float(d.get("theta", 0.0)))
    if kind == "denoise":
        return Denoise(float(d["sigma_255"]))
    if kind == "coupled":
        return Coupled(DegradationSpec.from_dict(d["spec"]))
    if kind == "virtual_stain":
        return VirtualStain(str(d["source_stain"]), str(d["target_stain"]))
    raise DataError(f"unknown task kind {kind!r}")


def task_scale(task):
    """Integer factor between restorer input and output dimensions."""
    if isinstance(task, SR):
        return task.scale
    if isinstance(task, Coupled):
        return task.spec.scale
    return 1


def task_steps(task, method=ResampleMethod.BICUBIC):
    """Degradation steps that produce a task's input from its ground truth."""
    if isinstance(task, SR):
        return (Downscale(task.scale, method),)
    if isinstance(task, Deblur):
        return (Blur(BlurParams(task.kernel_size, task.sigma1, task.sigma2, task.theta)),)
    if isinstance(task, Denoise):
        return (Noise(NoiseParams(task.sigma_255)),)
    if isinstance(task, Coupled):
        return task.spec.steps
    raise DataError(f"task {task!r} has no synthetic degradation")


@dataclass(frozen=True)
class Identity:
    label: str = "identity"


@dataclass(frozen=True)
class ResampleSR:
    method: ResampleMethod = ResampleMethod.BICUBIC

    @property
    def label(self):
        return ResampleMethod(self.method).value


@dataclass(frozen=True)
class External:
    command: tuple
    timeout: float = 300.0

    def __post_init__(self):
        if not self.command:
            raise DataError("external restorer command is empty")
        if self.timeout <= 0:
            raise DataError("timeout must be positive")

    @property
    def label(self):
        return "exec:" + os.path.basename(self.command[0])


def parse_restorer(text, timeout=300.0):
    """``identity`` | ``bicubic`` | ``bilinear`` | ``area`` | ``exec:CMD``."""
    if text == "identity":
        return Identity()
    if text in {m.value for m in ResampleMethod}:
        return ResampleSR(ResampleMethod(text))
    if text.startswith("exec:"):
        return External(tuple(shlex.split(text[5:])), timeout)
    raise DataError(f"unknown restorer {text!r}")


def _zero_order_hold(img, k):
    return np.repeat(np.repeat(img, k, axis=1), k, axis=2)


# moves the task pipe onto descriptor 3, then execs the restorer command
_TRAMPOLINE = (
    "import os, sys\n"
    "fd = int(sys.argv[1])\n"
    "if fd != 3:\n"
    "    os.dup2(fd, 3)\n"
    "    os.close(fd)\n"
    "try:\n"
    "    os.execvp(sys.argv[2], sys.argv[2:])\n"
    "except OSError as exc:\n"
    "    sys.stderr.write(f'cannot exec {sys.argv[2]}: {exc}\\n')\n"
    "    sys.exit(127)\n"
)


def _run_external(handle, img, task):
    payload = json.dumps(task.to_dict(), sort_keys=True)
    env = dict(os.environ, PF_TASK_JSON=payload)
    r, w = os.pipe()
    try:
        os.write(w, payload.encode())
    finally:
        os.close(w)
    argv = [sys.executable, "-c", _TRAMPOLINE, str(r), *handle.command]
    try:
        proc = subprocess.run(argv, input=encode_png(f32_to_u8(img)), capture_output=True,
                              env=env, pass_fds=(r,), timeout=handle.timeout)
    except subprocess.TimeoutExpired as exc:
        raise ExternalFailure(f"restorer timed out after {handle.timeout}s") from exc
    except OSError as exc:
        raise ExternalFailure(f"could not start restorer: {exc}") from exc
    finally:
        os.close(r)
    if proc.returncode != 0:
        tail = proc.stderr.decode(errors="replace").strip()[-500:]
        raise ExternalFailure(f"restorer exited with status {proc.returncode}: {tail}")
    try:
        return u8_to_f32(decode_image(proc.stdout))
    except PfError as exc:
        raise ExternalFailure(f"restorer produced malformed output: {exc}") from exc


def restore(handle, img, task):
    """Run a restorer and enforce the task's output-shape contract."""
    img = as_f32(img)
    k = task_scale(task)
    if isinstance(handle, Identity):
        out = _zero_order_hold(img, k) if k > 1 else img.copy()
    elif isinstance(handle, ResampleSR):
        out = resample(img, img.shape[2] * k, img.shape[1] * k, handle.method) if k > 1 else img.copy()
    elif isinstance(handle, External):
        out = _run_external(handle, img, task)
    else:
        raise DataError(f"unknown restorer handle {handle!r}")
    expected = (img.shape[1] * k, img.shape[2] * k)
    if out.shape[1:] != expected:
        raise ShapeViolation(f"restorer returned {out.shape[2]}x{out.shape[1]}, "
                             f"expected {expected[1]}x{expected[0]}")
    if not np.all(np.isfinite(out)):
        raise ShapeViolation("restorer returned non-finite samples")
    return out

