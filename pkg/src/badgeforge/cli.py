"""Command-line interface.

Usage::

    badgeforge [--config PATH] [--out DIR] [--jobs N] [--seed N] [--a.b VALUE ...] COMMAND

Commands are ``solve``, ``compare``, ``reproduce ID``, ``simulate`` and
``tiebreak``. Any scalar config field can be overridden with a flag named by
its dotted path, e.g. ``--distribution.H 100`` or ``--n large``.

Exit codes: 0 success, 2 configuration error, 3 model violation (non-regular
distribution or status shape mismatch), 4 acceptance failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import abilities as ab
from . import mechanisms as mc
from . import montecarlo as sim
from . import status as st
from . import tiebreak as tb
from .exceptions import BadgeForgeError, ConfigError, DomainError, NotRegular, ShapeMismatch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_ACCEPT = 4

REPRODUCE_IDS = ("median-4", "single-2", "convex-log", "leaderboard-concave")
EULER_GAMMA = 0.5772156649015329

DEFAULT_CONFIG: dict[str, Any] = {
    "distribution": {"kind": "uniform"},
    "status": {"kind": "linear"},
    "mechanism": {"variant": "absolute", "construction": "median"},
    "n": "large",
    "cost_exponent": 1.0,
    "betas": [round(0.1 * i, 10) for i in range(11)],
    "compare": {"concave_m": [3, 4, 8, 16], "linear_m": [1, 2, 3, 4, 8, 16]},
    "sweep": None,
    "seeds": [1],
    "trials": 400,
    "simulate": {"deviation_grid": 32, "type_grid": 9, "bne_trials": 200, "epsilon": 0.05,
                 "expost_trials": 500, "vs_trials": 400},
    "out": "out",
}


class CommandFailed(Exception):
    """Carries an exit code out of a command."""

    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Configuration


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _parse_scalar(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_dotted(cfg: dict, path: str, value: Any) -> None:
    """Assign ``value`` at a dotted path, creating intermediate objects."""
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot override {path!r}: {k!r} is not an object")
        node = nxt
    if isinstance(node.get(keys[-1]), dict):
        raise ConfigError(f"cannot override non-scalar field {path!r}")
    node[keys[-1]] = value


def get_dotted(cfg: dict, path: str) -> Any:
    node: Any = cfg
    for k in path.split("."):
        if not isinstance(node, dict) or k not in node:
            raise ConfigError(f"unknown config field {path!r}")
        node = node[k]
    return node


def load_config(path: str | None, overrides: Sequence[tuple[str, Any]] = ()) -> dict:
    """Read a JSON config, fill defaults and apply dotted-path overrides."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        if "mechanism" in user:
            cfg["mechanism"] = {}
        if "distribution" in user:
            cfg["distribution"] = {}
        if "status" in user:
            cfg["status"] = {}
        cfg = _merge(cfg, user)
    for k, v in overrides:
        set_dotted(cfg, k, v)
    return cfg


def _num(spec: dict, key: str, default: Any = None) -> float:
    val = spec.get(key, default)
    if val is None:
        raise ConfigError(f"missing field {key!r} in {spec}")
    try:
        return float(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field {key!r} must be numeric, got {val!r}") from exc


def build_distribution(spec: dict, base_dir: Path | None = None) -> ab.AbilityDistribution:
    kind = str(spec.get("kind", "")).lower()
    try:
        if kind in ("uniform", "uniform01"):
            return ab.Uniform01()
        if kind == "power":
            return ab.Power(alpha=_num(spec, "alpha"))
        if kind in ("longtail", "long_tail"):
            return ab.LongTail(H=_num(spec, "H"))
        if kind == "empirical":
            p = Path(str(spec.get("path", "")))
            if base_dir is not None and not p.is_absolute():
                p = base_dir / p
            return ab.EmpiricalQuantile.from_file(p)
        if kind == "mixture":
            comps = []
            for c in spec.get("components", []):
                comps.append((float(c["weight"]), build_distribution(c["distribution"], base_dir)))
            return ab.aggregate(ab.PopulationMix(tuple(comps)))
    except (DomainError, OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid distribution {spec}: {exc}") from exc
    raise ConfigError(f"unknown distribution kind {kind!r}")


def build_status(spec: dict) -> st.StatusFunction:
    kind = str(spec.get("kind", "")).lower()
    try:
        if kind == "linear":
            return st.Linear()
        if kind in ("concave_power", "concave"):
            return st.ConcavePower(alpha=_num(spec, "alpha"))
        if kind in ("convex_reciprocal", "convex"):
            return st.ConvexReciprocal(n_ref=int(_num(spec, "n_ref")))
    except DomainError as exc:
        raise ConfigError(f"invalid status {spec}: {exc}") from exc
    raise ConfigError(f"unknown status kind {kind!r}")


def build_setting(cfg: dict, base_dir: Path | None = None) -> mc.Setting:
    dist = build_distribution(cfg["distribution"], base_dir)
    status = build_status(cfg["status"])
    try:
        return mc.Setting(dist, status, st.parse_n(cfg.get("n", "large")), float(cfg.get("cost_exponent", 1.0)))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def build_quantiles(spec: dict, ctx: mc.Setting) -> mc.QuantileThresholds:
    """Quantile thresholds from explicit ``kappas`` or a named construction."""
    if spec.get("kappas") is not None:
        try:
            return mc.QuantileThresholds(tuple(float(k) for k in spec["kappas"]))
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid kappas: {exc}") from exc
    name = str(spec.get("construction", "")).lower()
    m = spec.get("m")
    if name == "median":
        return mc.construct_median()
    if name in ("improved_single", "single"):
        return mc.construct_single_improved(ctx.dist)
    if name == "concave_m":
        return mc.construct_concave_m(ctx.dist, ctx.status, ctx.n, int(m if m is not None else 4))
    if name in ("convex_logh", "convex_log"):
        return mc.construct_convex_logH(ctx.dist, ctx.status, ctx.n)
    if name == "linear_m":
        return mc.construct_linear_m(ctx.dist, int(m if m is not None else 2), ctx.status)
    raise ConfigError(f"absolute mechanism needs 'kappas', 'thetas' or a known 'construction', got {spec}")


def build_mechanism(cfg: dict, ctx: mc.Setting) -> mc.Mechanism:
    spec = cfg["mechanism"]
    variant = str(spec.get("variant", "absolute")).lower()
    if variant in ("optimal", "optimal_leaderboard_cutoff"):
        return mc.Mechanism(mc.OptimalLeaderboardCutoff(), ctx)
    if variant == "leaderboard":
        cut = spec.get("cutoff")
        return mc.Mechanism(mc.Leaderboard(None if cut is None else float(cut)), ctx)
    if variant == "absolute":
        if spec.get("thetas") is not None:
            try:
                ct = mc.ContributionThresholds(tuple(float(t) for t in spec["thetas"]))
            except (DomainError, TypeError, ValueError) as exc:
                raise ConfigError(f"invalid thetas: {exc}") from exc
            return mc.Mechanism(mc.AbsoluteThreshold(ct), ctx)
        return mc.Mechanism(mc.AbsoluteThreshold(build_quantiles(spec, ctx)), ctx)
    raise ConfigError(f"unknown mechanism variant {variant!r}")


def sweep_values(sweep: dict | None) -> list[Any]:
    if not sweep:
        return [None]
    if "values" in sweep:
        return list(sweep["values"])
    try:
        start, stop, steps = float(sweep["start"]), float(sweep["stop"]), int(sweep["steps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"sweep needs 'values' or 'start', 'stop', 'steps': {exc}") from exc
    if sweep.get("scale", "linear") == "log":
        return [float(x) for x in np.geomspace(start, stop, steps)]
    return [float(x) for x in np.linspace(start, stop, steps)]


# ---------------------------------------------------------------------------
# Output


def fmt(x: Any) -> str:
    """Format a cell: 12 significant digits for reals, text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    if x is None:
        return ""
    return str(x)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(c) for c in r])
    return buf.getvalue()


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    text = render_csv(header, rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return text


def write_plot(out: Path, stem: str, header: Sequence[str], rows: Sequence[Sequence[Any]],
               x: int, ys: Sequence[int], title: str, logx: bool = False) -> None:
    """Emit a whitespace data file and a gnuplot script that plots it."""
    dat = out / f"{stem}.dat"
    lines = ["# " + " ".join(header)]
    lines += [" ".join(fmt(c) for c in r) for r in rows]
    dat.write_text("\n".join(lines) + "\n")
    plots = ", ".join(
        f"'{dat.name}' using {x + 1}:{y + 1} with linespoints title '{header[y]}'" for y in ys
    )
    gp = [
        "set terminal pngcairo size 800,600",
        f"set output '{stem}.png'",
        f"set title '{title}'",
        f"set xlabel '{header[x]}'",
        "set key left top",
        "set grid",
    ]
    if logx:
        gp.append("set logscale x")
    gp.append(f"plot {plots}")
    (out / f"{stem}.gp").write_text("\n".join(gp) + "\n")


def _run_parallel(fn: Callable, items: Sequence[Any], jobs: int) -> list[Any]:
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# solve


def cmd_solve(cfg: dict, out: Path, base_dir: Path | None = None) -> str:
    """Equilibrium of an absolute-threshold mechanism."""
    ctx = build_setting(cfg, base_dir)
    ab.monopoly_quantile(ctx.dist)
    spec = cfg["mechanism"]
    if str(spec.get("variant", "absolute")).lower() != "absolute":
        raise ConfigError("solve requires an absolute-threshold mechanism")
    if spec.get("thetas") is not None:
        try:
            ct = mc.ContributionThresholds(tuple(float(t) for t in spec["thetas"]))
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid thetas: {exc}") from exc
        sol = mc.quantiles_from_thresholds(ctx, ct)
    else:
        kq = build_quantiles(spec, ctx)
        ct = mc.thresholds_from_quantiles(ctx, kq)
        sol = mc.quantiles_from_thresholds(ctx, ct) if len(ct) else mc.EquilibriumSolution(
            0, kq, ct, ())
    contrib = mc.absolute_contribution(ctx, sol.kappas)
    rows = []
    for t in range(1, len(ct) + 1):
        realised = t <= sol.p
        rows.append((
            t,
            sol.kappas[t - 1] if realised else None,
            ct[t - 1],
            sol.interim_levels[t - 1] if realised else None,
            realised,
        ))
    text = write_csv(out / "solve.csv", ["level", "kappa", "theta", "interim_status", "realised"], rows)
    summary = write_csv(
        out / "solve_summary.csv", ["field", "value"],
        [("p", sol.p), ("m", len(ct)), ("contribution", contrib),
         ("distribution", ctx.dist.describe()), ("status", ctx.Sn.describe())],
    )
    return text + summary


# ---------------------------------------------------------------------------
# compare


def _bound_rows(ctx: mc.Setting, cmp_cfg: dict) -> list[tuple]:
    """``(mechanism, param, contribution, ratio, bound, pass)`` for every applicable mechanism."""
    shape = ctx.status.shape
    opt = mc.optimal_contribution(ctx.dist, ctx.status, ctx.n)
    rows: list[tuple] = [("optimal", "", opt, 1.0, 1.0, True)]

    def add(name: str, param: Any, apx: float, bound: float | None) -> None:
        ratio = opt / apx if apx > 0 else math.inf
        ok = None if bound is None else bool(ratio <= bound + 1e-9)
        rows.append((name, param, apx, ratio, bound, "n/a" if ok is None else ok))

    if shape in ("concave", "linear"):
        add("median", "", mc.absolute_contribution(ctx, mc.construct_median()), 4.0)
        add("improved_single", "", mc.absolute_contribution(ctx, mc.construct_single_improved(ctx.dist)),
            2.0 if shape == "linear" else 3.0)
        for m in cmp_cfg.get("concave_m", []):
            m = int(m)
            add("concave_m", m, mc.absolute_contribution(ctx, mc.construct_concave_m(ctx.dist, ctx.status, ctx.n, m)),
                m / (m - 2))
    if shape == "linear":
        for m in cmp_cfg.get("linear_m", []):
            m = int(m)
            add("linear_m", m, mc.absolute_contribution(ctx, mc.construct_linear_m(ctx.dist, m)), (m + 2) / m)
    if shape == "convex":
        kq = mc.construct_convex_logH(ctx.dist, ctx.status, ctx.n)
        add("convex_logH", len(kq), mc.absolute_contribution(ctx, kq), 4.0)
    add("leaderboard", "", mc.leaderboard_contribution(ctx.dist, ctx.status, ctx.n),
        2.0 if shape == "convex" else None)
    return rows


def _compare_point(args: tuple[dict, Any, str | None]) -> tuple[Any, list[tuple] | tuple[int, str]]:
    cfg, key, base = args
    try:
        ctx = build_setting(cfg, Path(base) if base else None)
        return key, _bound_rows(ctx, cfg.get("compare", {}))
    except (NotRegular, ShapeMismatch) as exc:
        return key, (EXIT_MODEL, str(exc))
    except ConfigError as exc:
        return key, (EXIT_CONFIG, str(exc))


def cmd_compare(cfg: dict, out: Path, jobs: int = 1, base_dir: Path | None = None) -> str:
    """Approximation ratios of every applicable construction, optionally over a sweep."""
    sweep = cfg.get("sweep")
    param = sweep.get("param") if sweep else None
    items = []
    for val in sweep_values(sweep):
        c = copy.deepcopy(cfg)
        if param is not None:
            get_dotted(c, param) if "." not in param else None
            set_dotted(c, param, val)
        items.append((c, val, str(base_dir) if base_dir else None))
    results = _run_parallel(_compare_point, items, jobs)
    rows = []
    for key, res in results:
        if isinstance(res, tuple):
            raise CommandFailed(res[0], res[1])
        for r in res:
            rows.append(((key if key is not None else ""),) + r)
    rows.sort(key=lambda r: (_sort_key(r[0]), r[1], _sort_key(r[2])))
    header = ["sweep_value", "mechanism", "param", "contribution", "ratio", "bound", "pass"]
    text = write_csv(out / "compare.csv", header, rows)
    if any(r[-1] is False for r in rows):
        raise CommandFailed(EXIT_ACCEPT, text + "approximation bound violated")
    return text


def _sort_key(x: Any) -> tuple:
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return (0, float(x), "")
    return (1, 0.0, str(x))


# ---------------------------------------------------------------------------
# reproduce


def _median4_point(H: float) -> tuple:
    ctx = mc.Setting(ab.LongTail(H=H), st.Linear(), st.LARGE)
    opt = mc.optimal_contribution(ctx.dist, ctx.status)
    apx = mc.absolute_contribution(ctx, mc.construct_median())
    return (H, opt, apx, opt / apx)


def _single2_point(alpha: float) -> tuple:
    ctx = mc.Setting(ab.Power(alpha=alpha), st.Linear(), st.LARGE)
    opt = mc.optimal_contribution(ctx.dist, ctx.status)
    k, apx = mc.best_single_badge(ctx)
    return (alpha, opt, k, apx, opt / apx)


def _convexlog_point(n: int) -> tuple:
    ctx = mc.Setting(ab.Uniform01(), st.ConvexReciprocal(n_ref=n), n)
    opt = mc.optimal_contribution(ctx.dist, ctx.status, n)
    kq = mc.construct_convex_logH(ctx.dist, ctx.status, n)
    apx = mc.absolute_contribution(ctx, kq)
    base = math.log(n) + EULER_GAMMA - math.log(2.0)
    return (n, math.log2(n), opt, base - 9.0 / 8.0, base - 5.0 / 4.0, len(kq), apx, opt / apx)


def _leaderboard_concave_point(alpha: float) -> tuple:
    ctx = mc.Setting(ab.Uniform01(), st.ConcavePower(alpha=alpha), st.LARGE)
    lb = mc.leaderboard_contribution(ctx.dist, ctx.status)
    opt = mc.optimal_contribution(ctx.dist, ctx.status)
    d = alpha * alpha + 3 * alpha + 2
    return (alpha, lb, alpha / d, opt, (alpha + 2 ** (-alpha - 1)) / d, opt / lb)


@dataclass(frozen=True)
class _Recipe:
    header: tuple[str, ...]
    values: tuple[Any, ...]
    point: Callable[[Any], tuple]
    ys: tuple[int, ...]
    title: str
    logx: bool
    x: int = 0


RECIPES: dict[str, _Recipe] = {
    "median-4": _Recipe(("H", "opt", "median", "ratio"), tuple(10.0 ** k for k in range(1, 7)),
                        _median4_point, (3,), "Median badge ratio on the long-tail family", True),
    "single-2": _Recipe(("alpha", "opt", "best_kappa", "best_single", "ratio"),
                        (2.0, 4.0, 8.0, 16.0, 32.0, 64.0), _single2_point, (4,),
                        "Best single badge ratio on the power family", True),
    "convex-log": _Recipe(("n", "log2_n", "opt", "stated_bound", "corrected_bound", "thresholds", "ladder", "ratio"),
                          tuple(2 ** k for k in range(6, 13)), _convexlog_point, (2, 3, 4, 6),
                          "Optimal contribution under convex status", False, 1),
    "leaderboard-concave": _Recipe(("alpha", "leaderboard", "leaderboard_closed_form", "optimal",
                                    "optimal_closed_form", "ratio"),
                                   (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0), _leaderboard_concave_point, (5,),
                                   "Leaderboard failure under concave status", True),
}


def reproduce_checks(example_id: str, rows: Sequence[tuple]) -> list[tuple[str, bool]]:
    """Acceptance checks attached to each reproduction recipe."""
    if example_id == "median-4":
        r = [row[3] for row in rows]
        return [("ratio increasing in H", all(b >= a for a, b in zip(r, r[1:]))),
                ("ratio at H=1e6 >= 3.85", r[-1] >= 3.85), ("ratio <= 4", max(r) <= 4 + 1e-9)]
    if example_id == "single-2":
        r = [row[4] for row in rows]
        return [("ratio increasing in alpha", all(b >= a for a, b in zip(r, r[1:]))),
                ("ratio at alpha=64 >= 1.9", r[-1] >= 1.9), ("ratio <= 2", max(r) <= 2 + 1e-9)]
    if example_id == "convex-log":
        x = np.array([row[1] for row in rows])
        y = np.array([row[2] for row in rows])
        slope = float(np.polyfit(x, y, 1)[0])
        return [("slope per doubling within 15% of ln 2", abs(slope - math.log(2)) <= 0.15 * math.log(2)),
                ("corrected bound holds", all(row[2] >= row[4] for row in rows)),
                ("ladder ratio <= 4", all(row[7] <= 4 + 1e-9 for row in rows)),
                ("ladder contribution <= number of thresholds", all(row[6] <= row[5] + 1e-9 for row in rows))]
    if example_id == "leaderboard-concave":
        return [("closed forms match to 1e-4",
                 all(abs(row[1] - row[2]) <= 1e-4 and abs(row[3] - row[4]) <= 1e-4 for row in rows)),
                ("ratio at alpha=0.01 > 40", rows[0][5] > 40)]
    return []


def cmd_reproduce(example_id: str, out: Path, jobs: int = 1) -> str:
    """Regenerate one of the limiting examples as CSV plus plot files."""
    if example_id not in RECIPES:
        raise ConfigError(f"unknown example id {example_id!r}; choose from {', '.join(REPRODUCE_IDS)}")
    rec = RECIPES[example_id]
    rows = sorted(_run_parallel(rec.point, list(rec.values), jobs), key=lambda r: r[0])
    out.mkdir(parents=True, exist_ok=True)
    text = write_csv(out / f"{example_id}.csv", rec.header, rows)
    write_plot(out, example_id, rec.header, rows, rec.x, rec.ys, rec.title, rec.logx)
    checks = reproduce_checks(example_id, rows)
    report = "".join(f"{'PASS' if ok else 'FAIL'} {name}\n" for name, ok in checks)
    if not all(ok for _, ok in checks):
        raise CommandFailed(EXIT_ACCEPT, text + report)
    return text + report


# ---------------------------------------------------------------------------
# simulate


def _analytic(mech: mc.Mechanism) -> float:
    return mc.mechanism_contribution(mech)


def _simulate_seed(mech: mc.Mechanism, n: int, trials: int, seed: int, scfg: dict) -> tuple[dict, bool]:
    est = sim.estimate_contribution(mech, n, trials, seed)
    vs = sim.virtual_surplus_identity(mech, n, int(scfg.get("vs_trials", trials)), seed)
    bne = sim.verify_bne(mech, n, int(scfg.get("deviation_grid", 32)), int(scfg.get("type_grid", 9)),
                         int(scfg.get("bne_trials", 200)), seed)
    if isinstance(mech.variant, mc.AbsoluteThreshold):
        freq = sim.expost_regret_frequency(mech, n, float(scfg.get("epsilon", 0.05)),
                                           int(scfg.get("expost_trials", 500)), seed)
    else:
        freq = float("nan")
    analytic = _analytic(mech)
    z = (est.mean_contribution - analytic) / est.stderr if est.stderr > 0 else 0.0
    ok_mean = abs(est.mean_contribution - analytic) <= 3 * est.stderr + 1e-12
    ok_vs = vs.vs_residual <= 3 * vs.vs_stderr + 1e-12
    ok_bne = bne.interim_regret <= 3 * bne.interim_regret_stderr + 1e-12
    row = dict(seed=seed, mean=est.mean_contribution, stderr=est.stderr, analytic=analytic, z=z,
               vs_residual=vs.vs_residual, vs_stderr=vs.vs_stderr, interim_regret=bne.interim_regret,
               regret_stderr=bne.interim_regret_stderr, expost_freq=freq)
    return row, bool(ok_mean and ok_vs and ok_bne)


SIM_HEADER = ["seed", "retried", "mean", "stderr", "analytic", "z", "vs_residual", "vs_stderr",
              "interim_regret", "regret_stderr", "expost_freq", "pass"]
_RETRY_OFFSET = 1_000_003


def cmd_simulate(cfg: dict, out: Path, base_dir: Path | None = None) -> str:
    """Monte Carlo checks of one mechanism; one row per seed plus an aggregate."""
    ctx = build_setting(cfg, base_dir)
    if ctx.n is st.LARGE:
        raise ConfigError("simulate requires a finite population size 'n'")
    n = int(ctx.n)
    mech = build_mechanism(cfg, ctx)
    trials = int(cfg.get("trials", 400))
    if trials < 2:
        raise ConfigError("trials must be >= 2")
    seeds = cfg.get("seeds") or [1]
    scfg = cfg.get("simulate", {})
    rows = []
    all_ok = True
    for s in seeds:
        row, ok = _simulate_seed(mech, n, trials, int(s), scfg)
        retried = False
        if not ok:
            row, ok = _simulate_seed(mech, n, trials, int(s) + _RETRY_OFFSET, scfg)
            retried = True
        all_ok &= ok
        rows.append([row["seed"], retried, row["mean"], row["stderr"], row["analytic"], row["z"],
                     row["vs_residual"], row["vs_stderr"], row["interim_regret"], row["regret_stderr"],
                     row["expost_freq"], ok])
    rows.sort(key=lambda r: r[0])
    means = np.array([r[2] for r in rows])
    ses = np.array([r[3] for r in rows])
    agg_mean = float(means.mean())
    agg_se = float(np.sqrt(np.sum(ses ** 2)) / len(rows))
    analytic = rows[0][4]
    agg = ["all", "", agg_mean, agg_se, analytic, (agg_mean - analytic) / agg_se if agg_se > 0 else 0.0,
           float(np.mean([r[6] for r in rows])), float(np.sqrt(np.sum(np.square([r[7] for r in rows]))) / len(rows)),
           float(np.max([r[8] for r in rows])), float(np.max([r[9] for r in rows])),
           float(np.mean([r[10] for r in rows])), all_ok]
    text = write_csv(out / "simulate.csv", SIM_HEADER, rows + [agg])
    if not all_ok:
        raise CommandFailed(EXIT_ACCEPT, text + "statistical acceptance failed after retry")
    return text


# ---------------------------------------------------------------------------
# tiebreak


def cmd_tiebreak(cfg: dict, out: Path, base_dir: Path | None = None) -> str:
    """Median, leaderboard and optimal mechanisms across a grid of tie-breaking parameters."""
    if build_status(cfg["status"]).shape != "linear":
        raise ConfigError("tiebreak requires linear status")
    dist = build_distribution(cfg["distribution"], base_dir)
    betas = cfg.get("betas")
    if isinstance(betas, (int, float)):
        betas = [betas]
    rows = []
    for b in sorted(float(x) for x in betas):
        try:
            model = tb.TieBreakModel(b, dist)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        theta = tb.median_threshold(model)
        roots = tb.single_badge_equilibria(model, theta)
        med = tb.median_tiebreak_contribution(model)
        lb = tb.leaderboard_tiebreak_contribution(model)
        try:
            o = tb.optimal_tiebreak(model)
            structure, otheta, opt = o.structure, o.theta, o.opt
        except tb.UnsupportedBeta:
            structure, otheta, opt = "unsupported", None, None
        rows.append((b, theta, ";".join(fmt(r) for r in roots), len(roots), med.contribution,
                     med.opt_upper_bound, lb, structure, otheta, opt))
    header = ["beta", "median_theta", "roots", "n_roots", "median_contribution", "opt_upper_bound",
              "leaderboard_contribution", "opt_structure", "opt_theta", "opt"]
    return write_csv(out / "tiebreak.csv", header, rows)


# ---------------------------------------------------------------------------
# entry point


def _split_overrides(extra: Sequence[str]) -> list[tuple[str, Any]]:
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) <= 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {tok!r} needs a value")
            i += 1
            val = extra[i]
        out.append((key, _parse_scalar(val)))
        i += 1
    return out


def _global_flags(default: Any) -> argparse.ArgumentParser:
    # Subcommands repeat the global flags with suppressed defaults so that a
    # flag given before the subcommand is not reset.
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--jobs", metavar="N", type=int, help="parallel sweep workers")
    p.add_argument("--seed", metavar="N", type=int, help="single seed for simulations")
    return p


def build_parser() -> argparse.ArgumentParser:
    sub_flags = _global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="badgeforge", parents=[_global_flags(None)],
                                description="Badge mechanism design toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[sub_flags], help="equilibrium of an absolute-threshold mechanism")
    sub.add_parser("compare", parents=[sub_flags], help="approximation ratios of all constructions")
    rp = sub.add_parser("reproduce", parents=[sub_flags], help="reproduce a named example")
    rp.add_argument("example_id", help=", ".join(REPRODUCE_IDS))
    sub.add_parser("simulate", parents=[sub_flags], help="Monte Carlo verification")
    sub.add_parser("tiebreak", parents=[sub_flags], help="tie-breaking analysis")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _split_overrides(extra)
        cfg = load_config(args.config, overrides)
        if args.seed is not None:
            cfg["seeds"] = [args.seed]
        out = Path(args.out if args.out else cfg.get("out", "out"))
        jobs = max(1, int(args.jobs or 1))
        base = Path(args.config).resolve().parent if args.config else None
        if args.command == "solve":
            text = cmd_solve(cfg, out, base)
        elif args.command == "compare":
            text = cmd_compare(cfg, out, jobs, base)
        elif args.command == "reproduce":
            text = cmd_reproduce(args.example_id, out, jobs)
        elif args.command == "simulate":
            text = cmd_simulate(cfg, out, base)
        else:
            text = cmd_tiebreak(cfg, out, base)
    except CommandFailed as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (NotRegular, ShapeMismatch) as exc:
        print(f"model violation: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BadgeForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
