"""Execute a resolved run configuration and record what was produced.

Every run writes into one output directory: the resolved ``config.toml``,
the data files of the experiment, a ``plot.py`` script that renders them
with matplotlib, and ``manifest.json`` listing every file with its SHA-256
checksum.  The manifest is written even when the experiment fails.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import experiment as ex
from . import hbm
from .config import RunConfig, serialize
from .controller import PIGains
from .errors import ConfigError, CorrectorFailure, PLLTError, RunFailure

MANIFEST = "manifest.json"
SUCCESS = "success"
FAILED = "failed"


@dataclass
class RunManifest:
    kind: str
    preset: str
    status: str = FAILED
    message: str = ""
    wall_clock_s: float = 0.0
    steps: int = 0
    outcome: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    version: str = __version__

    @property
    def ok(self) -> bool:
        return self.status == SUCCESS

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST
        path.write_text(json.dumps(asdict(self), indent=2, default=_jsonable) + "\n")
        return path


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def read_manifest(out_dir) -> dict:
    return json.loads((Path(out_dir) / MANIFEST).read_text())


# -- per-kind drivers ------------------------------------------------------------
# each returns (status, message, outcome dict, step count) and writes its files

def _capture(cfg: RunConfig, spec, out: Path, n_periods: int = 10):
    """State transfer towards ``spec``; writes transfer.csv (and capture.csv on success)."""
    v = cfg.values
    setup = cfg.rig_setup()
    # the capture keeps its own integral gain; sweeps may use a different one
    setup = replace(setup, gains=PIGains(setup.gains.kp, v["transfer.ki"]))
    res = ex.state_transfer(spec, v["controller.force_amp"], omega0=v["controller.omega0"],
                            phase_ref=v["controller.phase_ref"], timeout=v["transfer.timeout"],
                            setup=setup,
                            subharmonic_ratio=v["transfer.subharmonic_ratio"])
    res.log.to_csv(out / "transfer.csv")
    if res.captured:
        # full-rate tail of the captured state, usable as a continuation seed
        tail = res.rig.copy()
        span = n_periods * spec.upsilon * 2 * math.pi / tail.omega
        tail.run(span).to_csv(out / "capture.csv")
    return res


def _outcome_of(res: ex.TransferResult) -> dict:
    d = {"transfer": res.outcome, **res.diagnostics}
    if res.record is not None:
        r = res.record
        d.update({"omega": r.omega, "phase_lag": r.phase_lag, "capture_time": r.t,
                  "A": [float(a) for a in r.A]})
    return d


def _run_transfer(cfg: RunConfig, out: Path, jobs: int):
    res = _capture(cfg, cfg.resonance(), out)
    status = SUCCESS if res.captured else FAILED
    msg = "" if res.captured else (res.diagnostics.get("failure") or "target branch not captured")
    return status, msg, _outcome_of(res), res.rig.steps


def _run_sweep(cfg: RunConfig, out: Path, jobs: int):
    v = cfg.values
    spec = cfg.resonance()
    sched = cfg.schedule()
    setup = cfg.rig_setup()
    outcome: dict = {}
    rig = None
    if spec.is_subharmonic:
        res = _capture(cfg, spec, out)
        outcome.update(_outcome_of(res))
        if not res.captured:
            return FAILED, "could not capture the subharmonic branch", outcome, res.rig.steps
        rig = res.rig
        rig.set_gains(setup.gains)
    if cfg.kind == "nfrc":
        result = ex.nfrc_sweep(spec, v["controller.force_amp"], sched, setup=setup, rig=rig)
    else:
        result = ex.backbone_sweep(spec, sched, phase_ref=v["controller.phase_ref"], setup=setup, rig=rig)
    name = f"{cfg.kind}.csv"
    result.to_csv(out / name)
    if result.failures:
        with open(out / "failures.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["set_point", "reason", "t"])
            for f in result.failures:
                w.writerow([repr(float(f.set_point)), f.reason, repr(float(f.t))])
    outcome.update({"records": len(result.records), "failures": len(result.failures),
                    "aborted": result.aborted, "note": result.note})
    steps = result.rig.steps if result.rig is not None else 0
    if result.aborted or not result.records:
        msg = result.note or (result.failures[-1].reason if result.failures else "no records")
        return FAILED, msg, outcome, steps
    return SUCCESS, result.note, outcome, steps


def _run_basin(cfg: RunConfig, out: Path, jobs: int):
    v = cfg.values
    res = ex.basin_scan(v["basin.force_amp"], v["basin.omega"], cfg.grid(), upsilon=v["basin.upsilon"],
                        horizon_periods=v["basin.horizon_periods"],
                        steps_per_period=v["basin.steps_per_period"], p=cfg.oscillator(), jobs=jobs)
    res.to_csv(out / "basin.csv")
    res.summary_csv(out / "basin_summary.csv")
    steps = res.n_cells * v["basin.horizon_periods"] * v["basin.steps_per_period"]
    return SUCCESS, "", {"fractions": res.fractions(), "isola_fraction": res.fraction}, steps


def _hbm_window(v: dict, F: float, p) -> dict:
    lo, hi = v["hbm.omega_min"], v["hbm.omega_max"]
    # amplitude scale from the cubic backbone; frequency scale resolves close features
    z_scale = max((F / abs(p.k_nl)) ** (1 / 3) if p.k_nl else F / p.k, 1e-6)
    return dict(lam_min=lo, lam_max=hi, z_scale=z_scale, lam_scale=min(0.1, (hi - lo) / 20),
                with_stability=v["hbm.stability"], max_points=5000)


def _read_capture(path) -> tuple[np.ndarray, np.ndarray, float]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "theta" not in rows[0]:
        raise ConfigError("seed file must be a capture.csv written by a transfer run", key="hbm.seed")
    x = np.array([float(r["x"]) for r in rows])
    theta = np.array([float(r["theta"]) for r in rows])
    omega = float(np.mean([float(r["omega"]) for r in rows]))
    return x, theta, omega


def _run_hbm(cfg: RunConfig, out: Path, jobs: int):
    v = cfg.values
    p = cfg.oscillator()
    spec = cfg.resonance()
    N = v["hbm.n_harmonics"]
    seed_data = _read_capture(v["hbm.seed"]) if "hbm.seed" in v else None

    def one(F):
        kw = _hbm_window(v, F, p)
        if seed_data is not None:
            x, theta, omega = seed_data
            seed = hbm.seed_isola(x, theta, omega, F, spec.upsilon, p, N=N)
            kw.update(detect_closure=True, z_scale=max(float(np.max(np.abs(seed.z))), 1e-6))
            branches = [hbm.continue_branch(seed, p, direction=1, **kw)]
            if not branches[0].closed:
                branches.append(hbm.continue_branch(seed, p, direction=-1, **kw))
            return branches
        seed = hbm.primary_seed(p, v["hbm.omega_min"], F, N=N)
        main = hbm.continue_branch(seed, p, **kw)
        branches = [main]
        if v["hbm.switch_branches"]:
            for i in main.tags("branch_point"):
                for d in (1, -1):
                    try:
                        branches.append(hbm.switch_branch(main, i, direction=d, **kw))
                    except CorrectorFailure:
                        pass
        return branches

    forces = v["hbm.forces"]
    if jobs > 1 and len(forces) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, forces))
    else:
        results = [one(F) for F in forces]
    outcome = {"branches": []}
    steps = 0
    for i, (F, branches) in enumerate(zip(forces, results), start=1):
        for j, br in enumerate(branches):
            name = f"branch_{i}.csv" if j == 0 else f"branch_{i}_{j}.csv"
            hbm.write_branch_csv(out / name, br)
            steps += len(br)
            outcome["branches"].append({
                "file": name, "F": F, "points": len(br), "stop_reason": br.stop_reason,
                "closed": br.closed,
                "folds": [br.points[k].omega for k in br.tags("fold")],
                "branch_points": [br.points[k].omega for k in br.tags("branch_point")],
                "neimark_sacker": [br.points[k].omega for k in br.tags("neimark_sacker")]})
    return SUCCESS, "", outcome, steps


_DRIVERS = {"nfrc": _run_sweep, "backbone": _run_sweep, "transfer": _run_transfer,
            "basin": _run_basin, "hbm": _run_hbm}


def run(cfg: RunConfig, out_dir, jobs: int = 1) -> RunManifest:
    """Run ``cfg`` into ``out_dir`` and return the manifest written there."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(kind=cfg.kind, preset=cfg.get("preset", ""), config=dict(cfg.values))
    (out / "config.toml").write_text(serialize(cfg))
    t0 = time.perf_counter()
    try:
        man.status, man.message, man.outcome, man.steps = _DRIVERS[cfg.kind](cfg, out, jobs)
    except (RunFailure, CorrectorFailure) as exc:
        man.status, man.message = FAILED, f"{type(exc).__name__}: {exc}"
    except PLLTError:
        man.wall_clock_s = time.perf_counter() - t0
        _finish(man, out)
        raise
    man.wall_clock_s = time.perf_counter() - t0
    _finish(man, out)
    return man


def _finish(man: RunManifest, out: Path) -> None:
    write_plot_script(out, man.kind, man.config.get("controller.kappa", 1))
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != MANIFEST)
    man.files = [{"name": p.name, "bytes": p.stat().st_size, "sha256": sha256(p)} for p in files]
    man.files.append({"name": MANIFEST, "bytes": None, "sha256": None})
    man.write(out)


def verify(out_dir) -> list[str]:
    """Names of files whose checksum no longer matches, or that are missing/unlisted."""
    out = Path(out_dir)
    man = read_manifest(out)
    listed = {f["name"] for f in man["files"]}
    bad = [f["name"] for f in man["files"]
           if f["sha256"] is not None and (not (out / f["name"]).is_file()
                                           or sha256(out / f["name"]) != f["sha256"])]
    bad += sorted(p.name for p in out.iterdir() if p.is_file() and p.name not in listed)
    return bad


_PLOT = '''"""Render the CSV files of this run directory (matplotlib)."""
import csv
import glob
import os
import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
KIND = {kind!r}


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {{k: [float(r[k]) for r in rows] for k in (rows[0] if rows else {{}})
            if k not in ("bif_tag", "label")}}, rows


def curves():
    fig, (ax_a, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(7, 7))
    for path in sorted(glob.glob(os.path.join(HERE, "*.csv"))):
        name = os.path.basename(path)
        if name in ("transfer.csv", "capture.csv", "failures.csv"):
            continue
        cols, _ = read(path)
        if "omega" not in cols:
            continue
        amp = next(k for k in ("A{kappa}", "A1") if k in cols)
        phase = "phase_lag" if "phase_lag" in cols else "Phi{kappa}"
        style = "o-" if "phase_lag" in cols else "-"
        ax_a.plot(cols["omega"], cols[amp], style, ms=3, label=name)
        if phase in cols:
            ax_p.plot(cols["omega"], cols[phase], style, ms=3)
    ax_a.set_ylabel("amplitude")
    ax_p.set_ylabel("phase lag [rad]")
    ax_p.set_xlabel("omega [rad/s]")
    ax_a.legend(fontsize=7)
    return fig


def transfer():
    cols, _ = read(os.path.join(HERE, "transfer.csv"))
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 8))
    axes[0].plot(cols["t"], cols["omega"])
    axes[0].set_ylabel("omega [rad/s]")
    axes[1].plot(cols["t"], cols["phase_lag"])
    axes[1].set_ylabel("phase lag [rad]")
    axes[2].plot(cols["t"], cols["x"], lw=0.3)
    axes[2].set_ylabel("x")
    axes[2].set_xlabel("t [s]")
    return fig


def basin():
    import numpy as np
    _, rows = read(os.path.join(HERE, "basin.csv"))
    codes = {{"main": 0, "isola": 1, "unresolved": 2, "diverged": 3}}
    x = np.array([float(r["x0"]) for r in rows])
    v = np.array([float(r["v0"]) for r in rows])
    lab = np.array([codes[r["label"]] for r in rows])
    n = int(round(len(rows) ** 0.5))
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.imshow(lab.reshape(n, n), origin="lower", extent=(x.min(), x.max(), v.min(), v.max()),
              cmap="viridis", vmin=0, vmax=3)
    ax.set_xlabel("x0")
    ax.set_ylabel("v0")
    return fig


if __name__ == "__main__":
    fig = {{"basin": basin, "transfer": transfer}}.get(KIND, curves)()
    target = sys.argv[1] if len(sys.argv) > 1 else os.path.join(HERE, KIND + ".png")
    fig.savefig(target, dpi=150, bbox_inches="tight")
'''


def write_plot_script(out: Path, kind: str, kappa: int = 1) -> Path:
    path = Path(out) / "plot.py"
    path.write_text(_PLOT.format(kind=kind, kappa=kappa))
    return path
