"""Benchmark orchestration: dataset generation, restorer evaluation, ranking and reports.

Determinism: every random draw is keyed by ``(seed, task key, image id)``, per-image
work is independent, and results are sorted by ``(task, restorer, image_id)`` before
anything is written, so outputs do not depend on the worker count (``PF_THREADS``).
"""

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import rng
from .degrade import DegradationSpec, ResampleMethod, degrade_pipeline
from .errors import DataError, EmptyCorpus, EmptyInput, IoFailure, MissingCell, PfError
from .image_core import Rect, crop, f32_to_u8, read_image, u8_to_f32, write_png
from .metrics import (
    METRIC_DIRECTIONS,
    MetricReport,
    average_rank,
    extract_profile,
    lpips_from_features,
    mse_mae,
    pearson,
    psnr,
    ssim,
    summarize,
    format_value,
)
from .restorers import (
    Deblur,
    External,
    SR,
    VirtualStain,
    restore,
    task_from_dict,
    task_scale,
    task_steps,
)
from .tiling import Tile, extract, plan_tiles, stitch

__all__ = [
    "DatasetManifest",
    "RunReport",
    "RankingTable",
    "load_grid",
    "standard_grid",
    "randomized_blur_grid",
    "generate_benchmark",
    "paired_manifest",
    "evaluate",
    "aggregate_and_rank",
    "emit_report",
    "load_reports",
    "worker_count",
]

MANIFEST_VERSION = "pf-manifest/1"
IMAGE_EXTENSIONS = (".png", ".tif", ".tiff")
CSV_METRICS = ("psnr_db", "ssim", "mae", "lpips")


def worker_count(threads=None):
    if threads is not None:
        return max(1, int(threads))
    return max(1, int(os.environ.get("PF_THREADS", "1")))


def _map(fn, items, threads):
    n = worker_count(threads)
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- task grids ---------------------------------------------------------------

def load_grid(source):
    """Tasks from a grid document: a path, or a dict with a ``tasks`` list."""
    if not isinstance(source, dict):
        with open(source) as fh:
            source = json.load(fh)
    if not source.get("tasks"):
        raise DataError("task grid has no tasks")
    return [task_from_dict(t) for t in source["tasks"]]


def standard_grid():
    """SR x{2,4,8}, blur kernels {7,11,15}, noise sigma {21,31,41}, one coupled recipe."""
    text = resources.files("pfbench").joinpath("data/standard_grid.json").read_text()
    return load_grid(json.loads(text))


def randomized_blur_grid(seed, sizes=(7, 11, 15), sigma_range=(1.5, 3.5)):
    """Anisotropic, rotated blur tasks with sigmas ~ U[sigma_range] and theta ~ U[0, pi)."""
    gen = rng.generator(rng.derive_seed(int(seed), "randomized_blur_grid"))
    tasks = []
    for k in sizes:
        s1, s2 = gen.uniform(*sigma_range, size=2)
        theta = gen.uniform(0.0, math.pi)
        tasks.append(Deblur(k, round(float(s1), 4), round(float(s2), 4), round(float(theta), 4)))
    return tasks


# -- manifests ----------------------------------------------------------------

@dataclass
class DatasetManifest:
    task: object
    pairs: list
    root: str
    version: str = MANIFEST_VERSION

    def to_dict(self):
        return {"version": self.version, "task": self.task.to_dict(), "pairs": self.pairs}

    def save(self, path=None):
        path = path or os.path.join(self.root, "manifest.json")
        _write_json(path, self.to_dict())
        return path

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read manifest {path}: {exc}") from exc
        m = cls(task_from_dict(d["task"]), list(d["pairs"]), os.path.dirname(os.path.abspath(path)),
                d.get("version", MANIFEST_VERSION))
        m.validate()
        return m

    def path(self, rel):
        return os.path.join(self.root, rel)

    def validate(self):
        if self.version != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version {self.version!r}")
        ids = [p["image_id"] for p in self.pairs]
        if len(set(ids)) != len(ids):
            raise DataError("manifest image_ids are not unique")
        if not ids:
            raise DataError("manifest has no pairs")
        for p in self.pairs:
            for key in ("gt_path", "degraded_path"):
                if not os.path.exists(self.path(p[key])):
                    raise DataError(f"image_id={p['image_id']}: missing file {p[key]}")


def _corpus(clean_dir, min_size):
    try:
        names = sorted(n for n in os.listdir(clean_dir) if n.lower().endswith(IMAGE_EXTENSIONS))
    except OSError as exc:
        raise IoFailure(f"cannot list {clean_dir}: {exc}") from exc
    if not names:
        raise EmptyCorpus(f"no PNG/TIFF images in {clean_dir}")
    stems = [os.path.splitext(n)[0] for n in names]
    if len(set(stems)) != len(stems):
        raise DataError("corpus file stems must be unique (they become image ids)")
    images = []
    for stem, name in zip(stems, names):
        try:
            img = read_image(os.path.join(clean_dir, name))
        except PfError as exc:
            raise exc.with_image(stem)
        if img.shape[0] < min_size or img.shape[1] < min_size:
            raise DataError(f"image_id={stem}: {img.shape[1]}x{img.shape[0]} is smaller than {min_size}x{min_size}")
        images.append((stem, img))
    return images


def _degrade_one(task, seed, image_id, gt):
    seed_img = rng.derive_seed(int(seed), task.key, image_id)
    method = ResampleMethod.BICUBIC
    if isinstance(task, SR):
        # the resampling kernel of each SR input is drawn uniformly from the three methods
        choice = rng.generator(rng.derive_seed(seed_img, "method")).integers(3)
        method = list(ResampleMethod)[int(choice)]
    return degrade_pipeline(gt, DegradationSpec(task_steps(task, method), seed_img), image_id)


def generate_benchmark(clean_dir, tasks, seed, out_dir, threads=None, min_size=256):
    """Degrade every clean image for every task; write PNGs, provenance and one manifest per task.

    Layout: ``out_dir/<task key>/{gt,degraded}/<id>.png``, ``prov/<id>.prov.json`` and
    ``manifest.json``. For dimension-changing tasks the ground truth is cropped at
    the top-left corner to a multiple of the scale factor.
    """
    corpus = _corpus(clean_dir, min_size)
    manifests = []
    for task in tasks:
        if isinstance(task, VirtualStain):
            raise DataError("virtual-staining manifests come from paired data; use paired_manifest")
        root = os.path.join(out_dir, task.key)
        for sub in ("gt", "degraded", "prov"):
            os.makedirs(os.path.join(root, sub), exist_ok=True)
        k = task_scale(task)

        def work(item, task=task, root=root, k=k):
            image_id, u8 = item
            gt = u8_to_f32(u8)
            h, w = gt.shape[1] - gt.shape[1] % k, gt.shape[2] - gt.shape[2] % k
            if (h, w) != gt.shape[1:]:
                gt = crop(gt, Rect(0, 0, w, h))
            degraded, prov = _degrade_one(task, seed, image_id, gt)
            pair = {
                "image_id": image_id,
                "gt_path": f"gt/{image_id}.png",
                "degraded_path": f"degraded/{image_id}.png",
                "provenance_path": f"prov/{image_id}.prov.json",
            }
            try:
                write_png(os.path.join(root, pair["gt_path"]), f32_to_u8(gt))
                write_png(os.path.join(root, pair["degraded_path"]), f32_to_u8(degraded))
                _write_json(os.path.join(root, pair["provenance_path"]), prov.to_dict())
            except OSError as exc:
                raise IoFailure(f"image_id={image_id}: {exc}") from exc
            return pair

        pairs = _map(work, corpus, threads)
        m = DatasetManifest(task, sorted(pairs, key=lambda p: p["image_id"]), os.path.abspath(root))
        m.save()
        manifests.append(m)
    return manifests


def paired_manifest(source_dir, target_dir, task, out_path):
    """Manifest for paired data (e.g. stain translation): degraded = source, GT = target.

    Files are matched by stem; paths are stored relative to the manifest location.
    """
    root = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(root, exist_ok=True)

    def index(d):
        return {os.path.splitext(n)[0]: os.path.join(d, n)
                for n in sorted(os.listdir(d)) if n.lower().endswith(IMAGE_EXTENSIONS)}

    src, tgt = index(source_dir), index(target_dir)
    common = sorted(set(src) & set(tgt))
    if not common:
        raise EmptyCorpus("no matching source/target image pairs")
    pairs = [{"image_id": i, "gt_path": os.path.relpath(tgt[i], root),
              "degraded_path": os.path.relpath(src[i], root), "provenance_path": None} for i in common]
    m = DatasetManifest(task, pairs, root)
    m.validate()
    m.save(out_path)
    return m


# -- evaluation ---------------------------------------------------------------

@dataclass
class RunReport:
    task: object
    restorer: str
    metrics: MetricReport
    wall_time: float
    config_fingerprint: str
    profiles: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "task": self.task.to_dict(),
            "restorer": self.restorer,
            "metrics": self.metrics.to_dict(),
            "wall_time": self.wall_time,
            "config_fingerprint": self.config_fingerprint,
            "profiles": self.profiles,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(task_from_dict(d["task"]), d["restorer"], MetricReport.from_dict(d["metrics"]),
                   float(d["wall_time"]), d["config_fingerprint"], d.get("profiles", {}))

    @property
    def task_key(self):
        return self.task.key

    @property
    def file_stem(self):
        label = "".join(c if c.isalnum() or c in "-_." else "_" for c in self.restorer)
        return f"{self.task_key}__{label}"


def _restore_tiled(handle, img, task, tile, overlap):
    _, h, w = img.shape
    if w < tile or h < tile:
        return restore(handle, img, task)
    g = plan_tiles(w, h, tile, overlap)
    k = task_scale(task)
    out = []
    for t in extract(img, g):
        r = Rect(t.rect.x * k, t.rect.y * k, t.rect.width * k, t.rect.height * k)
        out.append(Tile(t.ix, t.iy, r, restore(handle, t.pixels, task)))
    return stitch(out, g.scaled(k))


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _handle_config(handle):
    if isinstance(handle, External):
        return {"label": handle.label, "command": list(handle.command), "timeout": handle.timeout}
    return {"label": handle.label}


def evaluate(manifest, handle, tile_mode=None, profiles=(), lpips_provider=None, threads=None,
             seed=0, ci_level=0.95, ci_iterations=2000):
    """Restore every pair, score it against GT and aggregate with bootstrap CIs.

    ``tile_mode`` is None or ``(tile, overlap)``. ``profiles`` are ProfileLines in
    GT coordinates; their Pearson correlation is reported per image as ``pcc_<i>``.
    ``lpips_provider(img) -> (layers, weights)`` enables the LPIPS column.
    A failure on any image aborts the run; the error names the image id.
    """
    started = time.perf_counter()
    task = manifest.task

    def work(pair):
        image_id = pair["image_id"]
        try:
            gt = u8_to_f32(read_image(manifest.path(pair["gt_path"])))
            degraded = u8_to_f32(read_image(manifest.path(pair["degraded_path"])))
            if tile_mode:
                out = _restore_tiled(handle, degraded, task, *tile_mode)
            else:
                out = restore(handle, degraded, task)
            _, mae = mse_mae(gt, out, scale_255=True)
            row = {"image_id": image_id, "psnr_db": psnr(gt, out), "ssim": ssim(gt, out), "mae": mae,
                   "lpips": None}
            if lpips_provider is not None:
                fx, wts = lpips_provider(gt)
                fy, _ = lpips_provider(out)
                row["lpips"] = lpips_from_features(fx, fy, wts)
            prof = []
            for i, line in enumerate(profiles):
                g, r = extract_profile(gt, line), extract_profile(out, line)
                row[f"pcc_{i}"] = pearson(g, r)
                prof.append({"start": list(line.start), "end": list(line.end),
                             "gt": g.tolist(), "restored": r.tolist()})
            return row, prof
        except PfError as exc:
            raise exc.with_image(image_id)
        except OSError as exc:
            raise IoFailure(f"image_id={image_id}: {exc}") from exc

    results = _map(work, manifest.pairs, threads)
    per_image = [r for r, _ in results]
    if lpips_provider is None:
        for r in per_image:
            del r["lpips"]
    config = {
        "task": task.to_dict(),
        "restorer": _handle_config(handle),
        "tile_mode": list(tile_mode) if tile_mode else None,
        "profiles": [[list(p.start), list(p.end), p.samples] for p in profiles],
        "lpips": lpips_provider is not None,
        "seed": int(seed),
        "ci": [ci_level, ci_iterations],
        "pairs": [[p["image_id"], _file_digest(manifest.path(p["gt_path"])),
                   _file_digest(manifest.path(p["degraded_path"]))] for p in manifest.pairs],
    }
    fingerprint = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    metric_report = summarize(per_image, rng.derive_seed(int(seed), fingerprint), ci_level, ci_iterations)
    prof = {p["image_id"]: pr for p, (_, pr) in zip(manifest.pairs, results) if pr}
    return RunReport(task, handle.label, metric_report, time.perf_counter() - started, fingerprint,
                     dict(sorted(prof.items())))


# -- ranking ------------------------------------------------------------------

@dataclass
class RankingTable:
    overall: dict
    per_task: dict
    metric_means: dict
    metrics: list

    def to_csv(self):
        rows = [["scope", "method", "mean_rank"] + list(self.metrics)]
        for method in sorted(self.overall, key=lambda m: (self.overall[m], m)):
            rows.append(["all", method, f"{self.overall[method]:.6f}"]
                        + [format_value(self.metric_means["all"][method][k]) for k in self.metrics])
        for task in sorted(self.per_task):
            ranks = self.per_task[task]
            for method in sorted(ranks, key=lambda m: (ranks[m], m)):
                rows.append([task, method, f"{ranks[method]:.6f}"]
                            + [format_value(self.metric_means[task][method][k]) for k in self.metrics])
        return "".join(",".join(r) + "\n" for r in rows)


def _finite_mean(values):
    vals = [v for v in values if math.isfinite(v)]
    return float(np.mean(vals)) if vals else math.inf


def aggregate_and_rank(reports):
    """Average rank per restorer over all (task, metric) cells, plus per-task ranks."""
    if not reports:
        raise EmptyInput("no reports to rank")
    metrics = ["psnr_db", "ssim", "mae"]
    if all("lpips" in r.metrics.aggregates for r in reports):
        metrics.append("lpips")
    cells = {}
    for r in reports:
        if (r.task_key, r.restorer) in cells:
            raise DataError(f"duplicate report for task {r.task_key}, restorer {r.restorer}")
        cells[(r.task_key, r.restorer)] = {m: r.metrics.aggregates[m]["mean"] for m in metrics}
    tasks = sorted({t for t, _ in cells})
    methods = sorted({m for _, m in cells})
    missing = [(t, m) for t in tasks for m in methods if (t, m) not in cells]
    if missing:
        raise MissingCell(f"incomplete task x restorer grid, missing {missing}")

    table = {(t, k): {m: cells[(t, m)][k] for m in methods} for t in tasks for k in metrics}
    overall = average_rank(table, METRIC_DIRECTIONS)
    per_task = {t: average_rank({key: v for key, v in table.items() if key[0] == t}, METRIC_DIRECTIONS)
                for t in tasks}
    means = {t: {m: cells[(t, m)] for m in methods} for t in tasks}
    means["all"] = {m: {k: _finite_mean([cells[(t, m)][k] for t in tasks]) for k in metrics} for m in methods}
    return RankingTable(overall, per_task, means, metrics)


# -- reports ------------------------------------------------------------------

def _sorted_reports(reports):
    return sorted(reports, key=lambda r: (r.task_key, r.restorer))


def emit_report(reports, fmt, out_dir):
    """Write ``report.csv`` or ``report.json`` plus ``profiles/*.csv`` under ``out_dir``."""
    reports = _sorted_reports(reports)
    if not reports:
        raise EmptyInput("no reports to emit")
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        if fmt == "csv":
            path = os.path.join(out_dir, "report.csv")
            with open(path, "w", newline="") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(["task", "restorer", "metric", "mean", "ci_lo", "ci_hi", "n", "n_excluded_inf"])
                for r in reports:
                    for k in CSV_METRICS:
                        if k not in r.metrics.aggregates:
                            continue
                        a = r.metrics.aggregates[k]
                        wr.writerow([r.task_key, r.restorer, k, format_value(a["mean"]), format_value(a["ci_lo"]),
                                     format_value(a["ci_hi"]), a["n"], a["n_excluded_inf"]])
        elif fmt == "json":
            path = os.path.join(out_dir, "report.json")
            _write_json(path, [r.to_dict() for r in reports])
        else:
            raise DataError(f"unknown report format {fmt!r}")
        written.append(path)
        for r in reports:
            for image_id, lines in r.profiles.items():
                pdir = os.path.join(out_dir, "profiles")
                os.makedirs(pdir, exist_ok=True)
                for i, line in enumerate(lines):
                    ppath = os.path.join(pdir, f"{r.file_stem}__{image_id}__{i}.csv")
                    with open(ppath, "w") as fh:
                        fh.write("sample,gt,restored\n")
                        for j, (g, v) in enumerate(zip(line["gt"], line["restored"])):
                            fh.write(f"{j},{g:.6f},{v:.6f}\n")
                    written.append(ppath)
        return written
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def save_run(report, out_dir):
    """Write a RunReport as ``<task>__<restorer>.json`` plus its per-image CSV."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, report.file_stem + ".json")
    _write_json(path, report.to_dict())
    with open(os.path.join(out_dir, report.file_stem + ".csv"), "w") as fh:
        fh.write(report.metrics.to_csv())
    return path


def load_reports(report_dir):
    """Every RunReport JSON in a directory, in sorted order."""
    reports = []
    for name in sorted(os.listdir(report_dir)):
        if not name.endswith(".json"):
            continue
        with open(os.path.join(report_dir, name)) as fh:
            d = json.load(fh)
        if isinstance(d, dict) and "config_fingerprint" in d:
            reports.append(RunReport.from_dict(d))
    if not reports:
        raise EmptyInput(f"no run reports in {report_dir}")
    return _sorted_reports(reports)
