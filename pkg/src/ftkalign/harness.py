"""Dataset generation, planning, alignment runs, benchmarks and accuracy sweeps.

Each ``cmd_*`` function takes a :class:`RunConfig`, writes its outputs under
``config.out`` and returns the in-memory result so tests can inspect it.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engines import (RotationGrid, TranslationGrid, argmax_alignment, bfr_image, bfr_pair,
                      bfr_setup, bfr_template, bft_batch, ftk_batch, ftk_operators,
                      make_translation_grid, radial_self_test, save_grid_binary,
                      InnerProductGrid)
from .fourier_bessel import (RigidTransform, default_Q, fb_decompose, gen_gaussian_blobs,
                             load_image, nyquist_frequency, polar_fourier, save_image,
                             transform_image)
from .interpolation import (ftk_shift_error, ftk_terms_for_error, lattice_nodes,
                            linear_interp_hs_error, linear_nodes_for_error,
                            linear_shift_error)
from .kernel import (TranslationKernelSVD, assemble_svd, default_basis_size,
                     hs_error, load_plan, plan_matches, relative_hs_error, save_plan,
                     x_error_bound)

log = logging.getLogger("ftkalign")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class BoundViolation(RuntimeError):
    """An FTK result exceeded its certified error bound."""


ENGINES = ("ftk", "bft", "bfr")


@dataclass
class RunConfig:
    n: int = 64
    W: float = 2.0
    eps: float = 1e-2
    spacing: str = "half"
    ngamma: int | None = None
    engine: str = "ftk"
    nim: int = 10
    seed: int = 0
    out: str = "."
    threads: int | None = None
    plan_cache: str | None = None
    offgrid: bool = False

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ConfigError("n must be even and at least 4")
        if not self.W > 0:
            raise ConfigError("W must be positive")
        if not 0 < self.eps < 0.5:
            raise ConfigError("eps must lie in (0, 0.5)")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        if self.nim < 1:
            raise ConfigError("nim must be at least 1")
        if self.ngamma is not None and self.ngamma < 1:
            raise ConfigError("ngamma must be positive")
        self.shift_spacing  # validates the selector

    @property
    def dx(self) -> float:
        return 2.0 / self.n

    @property
    def K(self) -> float:
        return nyquist_frequency(self.n)

    @property
    def D(self) -> float:
        return 2 * math.pi * self.W / self.K

    @property
    def Q(self) -> int:
        return default_Q(self.K)

    @property
    def n_gamma(self) -> int:
        return self.ngamma if self.ngamma is not None else 2 * self.Q

    @property
    def shift_spacing(self) -> float:
        if self.spacing == "half":
            return self.dx / 2
        if self.spacing == "quarter":
            return self.dx / 4
        try:
            s = float(self.spacing)
        except ValueError:
            raise ConfigError("spacing must be half, quarter or a positive number") from None
        if not s > 0:
            raise ConfigError("spacing must be positive")
        return s

    @property
    def plan_path(self) -> Path:
        return Path(self.plan_cache) if self.plan_cache else Path(self.out) / "plan.ftk"

    def tgrid(self) -> TranslationGrid:
        return make_translation_grid(self.D, self.shift_spacing)

    def rgrid(self) -> RotationGrid:
        return RotationGrid(self.n_gamma)


# -- gen ---------------------------------------------------------------------------------

MANIFEST_FIELDS = ["image", "template", "shift_x", "shift_y", "angle"]


def cmd_gen(cfg: RunConfig) -> list:
    """Write templates, transformed images and a ground-truth manifest.

    Ground-truth shifts are drawn from the alignment lattice inside the shift
    disk and angles from the rotation grid, unless ``cfg.offgrid`` asks for
    continuous values.  Image ``i`` is a transformed copy of template
    ``perm[i]`` for a random permutation ``perm``.
    """
    out = Path(cfg.out)
    try:
        (out / "templates").mkdir(parents=True, exist_ok=True)
        (out / "images").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot write to {out}: {e}") from e
    rng = np.random.default_rng(cfg.seed)
    tgrid, rgrid = cfg.tgrid(), cfg.rgrid()
    tseeds = rng.integers(0, 2 ** 31, size=cfg.nim)
    perm = rng.permutation(cfg.nim)
    rows = []
    for i in range(cfg.nim):
        T = gen_gaussian_blobs(int(tseeds[i]), cfg.n)
        T.meta["transform"] = "none"
        save_image(T, out / "templates" / f"t{i:03d}")
    for i in range(cfg.nim):
        if cfg.offgrid:
            while True:
                d = rng.uniform(-cfg.D, cfg.D, size=2)
                if math.hypot(*d) <= cfg.D:
                    break
            g = float(rng.uniform(0, 2 * math.pi))
        else:
            d = tgrid.shifts[rng.integers(tgrid.N)]
            g = float(rgrid.angles[rng.integers(rgrid.n_gamma)])
        t = perm[i]
        src = load_image(out / "templates" / f"t{t:03d}")
        img = transform_image(src, RigidTransform((float(d[0]), float(d[1])), g))
        img.meta["template"] = int(t)
        img.meta["transform"] = "translate_then_rotate"
        save_image(img, out / "images" / f"i{i:03d}")
        rows.append({"image": i, "template": int(t), "shift_x": float(d[0]),
                     "shift_y": float(d[1]), "angle": g})
    with open(out / "manifest.csv", "w", newline="") as f:
        w = csv.DictWriter(f, MANIFEST_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    cfg_fields = {k: getattr(cfg, k) for k in ("n", "W", "spacing", "ngamma", "nim", "seed", "offgrid")}
    (out / "dataset.txt").write_text("".join(f"{k}={v}\n" for k, v in cfg_fields.items()))
    return rows


def read_manifest(path) -> list:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [{"image": int(r["image"]), "template": int(r["template"]),
             "shift_x": float(r["shift_x"]), "shift_y": float(r["shift_y"]),
             "angle": float(r["angle"])} for r in rows]


def load_dataset(root):
    root = Path(root)
    if not (root / "manifest.csv").exists():
        raise ConfigError(f"no dataset at {root}; run 'gen' first")
    rows = read_manifest(root / "manifest.csv")
    nt = len(list((root / "templates").glob("t*.f64")))
    templates = [load_image(root / "templates" / f"t{i:03d}") for i in range(nt)]
    images = [load_image(root / "images" / f"i{r['image']:03d}") for r in rows]
    return templates, images, rows


# -- plan --------------------------------------------------------------------------------

def cmd_plan(cfg: RunConfig, report: bool = True) -> TranslationKernelSVD:
    """Build the FTK plan or load it from the cache when the key matches."""
    P = default_basis_size(cfg.W)
    path = cfg.plan_path
    svd = None
    if path.exists():
        try:
            cached = load_plan(path)
        except (ValueError, KeyError) as e:
            log.warning("ignoring unreadable plan cache %s: %s", path, e)
        else:
            if plan_matches(cached, cfg.W, cfg.K, cfg.eps, P):
                log.info("plan cache hit: %s", path)
                svd = cached
    if svd is None:
        t0 = time.perf_counter()
        svd = assemble_svd(cfg.W, cfg.K, cfg.eps, P)
        log.info("plan built in %.2f s", time.perf_counter() - t0)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_plan(svd, path)
    if report:
        ranks = {l: h for l, h in svd.mode_ranks().items() if h}
        print(f"H = {svd.H}")
        print("H_l = " + ", ".join(f"{l}:{h}" for l, h in ranks.items()))
        print(f"HS error = {hs_error(svd, svd.H):.3e} (relative {relative_hs_error(svd, svd.H):.3e})")
    return svd


def cmd_svd_report(cfg: RunConfig, path=None) -> Path:
    svd = cmd_plan(cfg, report=False)
    path = Path(path) if path else Path(cfg.out) / "svd_report.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ell", "eta", "sigma", "retained"])
        for z, (ell, eta, s) in enumerate(svd.order):
            w.writerow([ell, eta, repr(float(s)), int(z < svd.H)])
    return path


# -- align -------------------------------------------------------------------------------

ALIGN_FIELDS = ["image", "template", "shift_x", "shift_y", "angle", "X",
                "true_template", "true_shift_index", "true_angle_index", "match", "x_error_bound"]


def _prepare(images, M=None):
    polar = [polar_fourier(im, M=M) for im in images]
    return polar, [fb_decompose(p) for p in polar]


def run_pairs(engine: str, templates, images, tgrid, rgrid, svd=None, pad=None, reduce=None):
    """Loop over all template-image pairs; ``reduce(t, X)`` receives ``X[i, j, r]``.

    Returns ``(precompute_seconds, pair_loop_seconds)``.
    """
    t0 = time.perf_counter()
    tpol, tco = _prepare(templates)
    _, ico = _prepare(images)
    if engine == "ftk":
        if svd is None:
            raise ConfigError("engine ftk needs a plan")
        ops = ftk_operators(svd, tco[0].rule, tco[0].Q, tgrid)
    elif engine == "bfr":
        setup = bfr_setup(templates[0].n, tco[0].rule, pad)
        tcart = [bfr_template(T, setup) for T in templates]
        irot = [bfr_image(b, setup, rgrid) for b in ico]
    pre = time.perf_counter() - t0
    t0 = time.perf_counter()
    for t in range(len(templates)):
        if engine == "ftk":
            X = ftk_batch(tco[t], ico, ops, rgrid)
        elif engine == "bft":
            X = bft_batch(tpol[t], ico, tgrid, rgrid)
        else:
            X = np.stack([bfr_pair(tcart[t], irot[i], setup, tgrid) for i in range(len(images))])
        if reduce is not None:
            reduce(t, X)
    return pre, time.perf_counter() - t0


def bfr_pad(cfg: RunConfig) -> int:
    pad = 2.0 / (cfg.n * cfg.shift_spacing)
    if abs(pad - round(pad)) > 1e-9 or round(pad) < 1:
        raise ConfigError("bfr needs a spacing of dx/p for integer p (half or quarter)")
    return int(round(pad))


def cmd_align(cfg: RunConfig, verify: bool = False, write_grids: bool = True,
              self_test: bool = False) -> list:
    """Best (template, shift, angle) for every image, checked against the manifest.

    With ``verify`` and engine ``ftk``, every pair is also run through BFT
    and the RMS difference compared with the certified bound.  ``self_test``
    first checks on one pair that ``M = n`` rings resolve ``X``.
    """
    root = Path(cfg.out)
    templates, images, rows = load_dataset(root)
    if self_test:
        M = radial_self_test(templates[0], images[0], cfg.tgrid(), cfg.n_gamma, cfg.eps)
        print(f"radial self-test: M = {M} rings resolve X to 0.1 eps")
        if M > cfg.n:
            log.warning("default M = n is too small for this data (needs %d)", M)
    svd = None
    if cfg.engine == "ftk":
        if not cfg.plan_path.exists():
            raise ConfigError(f"no FTK plan at {cfg.plan_path}; run 'plan' with the same "
                              "--W/--eps/--n (and --plan-cache) first")
        svd = load_plan(cfg.plan_path)
        if not plan_matches(svd, cfg.W, cfg.K, cfg.eps, default_basis_size(cfg.W)):
            raise ConfigError("plan cache does not match --W/--eps/--n; rerun 'plan'")
    tgrid, rgrid = cfg.tgrid(), cfg.rgrid()
    nimg = len(images)
    best = [(-np.inf, None) for _ in range(nimg)]
    grids = {}

    def reduce(t, X):
        for i in range(nimg):
            j, r, v = argmax_alignment(X[i])
            if v > best[i][0]:
                best[i] = (v, (t, j, r))
                if write_grids:
                    grids[i] = (t, X[i].copy())

    pad = bfr_pad(cfg) if cfg.engine == "bfr" else None
    run_pairs(cfg.engine, templates, images, tgrid, rgrid, svd, pad, reduce)

    bounds = np.full((len(templates), nimg), np.nan)
    if svd is not None:
        _, tco = _prepare(templates)
        _, ico = _prepare(images)
        for t in range(len(templates)):
            for i in range(nimg):
                bounds[t, i] = x_error_bound(svd, svd.H, tco[t], ico[i])
        if verify:
            tpol, _ = _prepare(templates)
            ops = ftk_operators(svd, tco[0].rule, tco[0].Q, tgrid)
            for t in range(len(templates)):
                Xb = bft_batch(tpol[t], ico, tgrid, rgrid)
                Xf = ftk_batch(tco[t], ico, ops, rgrid)
                rms = np.sqrt(np.mean((Xf - Xb) ** 2, axis=(1, 2)))
                bad = np.nonzero(rms > bounds[t])[0]
                if bad.size:
                    raise BoundViolation(f"template {t}: RMS error above certified bound "
                                         f"for images {bad.tolist()}")

    out_rows = []
    if write_grids:
        (root / "grids").mkdir(exist_ok=True)
    for i, row in enumerate(rows):
        v, (t, j, r) = best[i]
        tj = tgrid.nearest((row["shift_x"], row["shift_y"]))
        tr = rgrid.nearest(row["angle"])
        out_rows.append({
            "image": i, "template": t, "shift_x": float(tgrid.shifts[j, 0]),
            "shift_y": float(tgrid.shifts[j, 1]), "angle": float(rgrid.angles[r]), "X": v,
            "true_template": row["template"], "true_shift_index": tj, "true_angle_index": tr,
            "match": int(t == row["template"] and j == tj and r == tr),
            "x_error_bound": float(bounds[t, i]),
        })
        if write_grids:
            g = InnerProductGrid(grids[i][1], tgrid, rgrid, cfg.engine)
            save_grid_binary(g, root / "grids" / f"i{i:03d}_{cfg.engine}.bin")
    write_csv(root / f"alignments_{cfg.engine}.csv", ALIGN_FIELDS, out_rows)
    n_ok = sum(r["match"] for r in out_rows)
    print(f"{cfg.engine}: {n_ok}/{nimg} images matched template, shift and angle")
    return out_rows


# -- bench -------------------------------------------------------------------------------

@dataclass
class BenchRecord:
    engine: str
    n: int
    W: float
    eps: float
    H: int
    N: int
    n_gamma: int
    precompute_s: float
    pair_s: float
    rms_error: float
    max_error: float
    argmax_consistent: int


def write_csv(path, fields, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for k, v in r.items()})


def write_bench(path, records) -> None:
    fields = [f.name for f in dataclasses.fields(BenchRecord)]
    write_csv(path, fields, [dataclasses.asdict(r) for r in records])


def read_bench(path) -> list:
    types = {f.name: f.type for f in dataclasses.fields(BenchRecord)}
    cast = {"str": str, "int": int, "float": float}
    with open(path, newline="") as f:
        return [BenchRecord(**{k: cast[types[k]](v) for k, v in r.items()})
                for r in csv.DictReader(f)]


def _bench_images(cfg: RunConfig, count: int):
    rng = np.random.default_rng(cfg.seed + 1)
    templates = [gen_gaussian_blobs(int(s), cfg.n) for s in rng.integers(0, 2 ** 31, count)]
    images = []
    for i in range(count):
        g = float(rng.uniform(0, 2 * np.pi))
        d = rng.uniform(-0.5, 0.5, 2) * cfg.D / math.sqrt(2)
        images.append(transform_image(templates[(i + 1) % count], RigidTransform(tuple(d), g)))
    return templates, images


def cmd_bench(cfg: RunConfig, fractions=(0.4, 0.55, 0.75, 1.0), engines=ENGINES,
              repeats: int = 3, bfr_pairs: int = 1, path=None) -> list:
    """Time every engine on shift disks of radius ``f * D`` with one plan for ``D``.

    The plan (hence ``H``) is fixed, so ``N`` is the only variable.  Times
    are medians over ``repeats`` and reported per image-template pair; errors
    are relative to the BFT values on the same grid.
    """
    svd = cmd_plan(cfg, report=False) if "ftk" in engines else None
    templates, images = _bench_images(cfg, cfg.nim)
    rgrid = cfg.rgrid()
    s = cfg.shift_spacing
    records = []
    for f in fractions:
        tgrid = make_translation_grid(f * cfg.D, s)
        ref = {}

        def keep(t, X, store):
            store[t] = X

        bft_vals = {}
        times = {}
        for eng in engines:
            tt, pp = [], []
            store = {}
            T, I = templates, images
            if eng == "bfr":
                T, I = templates[:bfr_pairs], images[:bfr_pairs]
            for rep in range(repeats):
                store = {}
                pre, loop = run_pairs(eng, T, I, tgrid, rgrid, svd,
                                      bfr_pad(cfg) if eng == "bfr" else None,
                                      lambda t, X: keep(t, X, store))
                tt.append(pre)
                pp.append(loop / (len(T) * len(I)))
            times[eng] = (statistics.median(tt), statistics.median(pp))
            if eng == "bft":
                bft_vals = store
            ref[eng] = store
        for eng in engines:
            rms = mx = float("nan")
            cons = -1
            if bft_vals and eng != "bft":
                ts = sorted(ref[eng])
                diff = np.concatenate([(ref[eng][t] - bft_vals[t][:ref[eng][t].shape[0]]).ravel()
                                       for t in ts])
                scale = np.concatenate([bft_vals[t][:ref[eng][t].shape[0]].ravel() for t in ts])
                rms = float(np.sqrt(np.mean(diff ** 2)) / np.sqrt(np.mean(scale ** 2)))
                mx = float(np.abs(diff).max() / np.abs(scale).max())
                cons = int(all(argmax_alignment(ref[eng][t][i])[:2] == argmax_alignment(bft_vals[t][i])[:2]
                               for t in ts for i in range(ref[eng][t].shape[0])))
            elif eng == "bft":
                rms, mx, cons = 0.0, 0.0, 1
            records.append(BenchRecord(eng, cfg.n, cfg.W * f, cfg.eps,
                                       svd.H if (eng == "ftk" and svd) else 0, tgrid.N,
                                       rgrid.n_gamma, times[eng][0], times[eng][1], rms, mx, cons))
            log.info("%s N=%d pair=%.4fs", eng, tgrid.N, times[eng][1])
    path = Path(path) if path else Path(cfg.out) / "bench.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_bench(path, records)
    return records


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- accuracy ----------------------------------------------------------------------------

def cmd_accuracy(cfg: RunConfig, Ws=(1, 2, 3), shift_W: float = 2.0, target: float = 1e-2,
                 eps_list=(1e-1, 1e-2, 1e-3), radii_count: int = 200) -> dict:
    """HS error versus term count, node-count ratios and error-versus-shift curves.

    Writes ``accuracy_hs.csv`` (method, W, count, E), ``node_ratio.csv`` and
    ``shift_error.csv`` (method, H, delta, error) under ``cfg.out``.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    K = cfg.K
    hs_rows, ratio_rows = [], []
    for W in Ws:
        svd = assemble_svd(W, K, 1e-7)
        s = 2 * np.pi * svd.sigma
        tail = np.sqrt(np.cumsum((s ** 2)[::-1])[::-1]) / (np.pi * svd.D * svd.K)
        for H in range(1, min(len(tail), 4 * svd.H)):
            if tail[H] < 1e-7:
                break
            hs_rows.append({"method": "ftk", "W": W, "count": H, "E": float(tail[H])})
        D = svd.D
        for h in D / np.geomspace(1.5, 40, 24):
            hs_rows.append({"method": "linear", "W": W, "count": len(lattice_nodes(D, h)[1]),
                            "E": linear_interp_hs_error(D, K, h, nr=60, nt=96)})
        Hf = ftk_terms_for_error(svd, target)
        h, nodes, err = linear_nodes_for_error(D, K, target, nr=60, nt=96)
        ratio_rows.append({"W": W, "ftk_terms": Hf, "linear_nodes": nodes,
                           "linear_pitch": h, "linear_E": err, "ratio": nodes / Hf})
    write_csv(out / "accuracy_hs.csv", ["method", "W", "count", "E"], hs_rows)
    write_csv(out / "node_ratio.csv", list(ratio_rows[0]), ratio_rows)

    shift_rows = []
    D = 2 * math.pi * shift_W / K
    radii = np.linspace(0, D, radii_count)
    for eps in eps_list:
        svd = assemble_svd(shift_W, K, eps)
        e = ftk_shift_error(svd, radii)
        shift_rows += [{"method": "ftk", "H": svd.H, "delta": float(r), "error": float(v)}
                       for r, v in zip(radii, e)]
        h = matched_lattice_pitch(D, svd.H)
        e = linear_shift_error(D, K, h, radii)
        shift_rows += [{"method": "linear", "H": svd.H, "delta": float(r), "error": float(v)}
                       for r, v in zip(radii, e)]
    write_csv(out / "shift_error.csv", ["method", "H", "delta", "error"], shift_rows)
    return {"hs": hs_rows, "ratio": ratio_rows, "shift": shift_rows}


def matched_lattice_pitch(D: float, budget: int) -> float:
    """Largest-count lattice pitch whose node count does not exceed ``budget``."""
    h = D
    while len(lattice_nodes(D, h / 1.01)[1]) <= budget:
        h /= 1.01
    return h
