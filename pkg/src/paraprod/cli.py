"""Batch experiment runner: ``paraprod <experiment> --config FILE [--seed S] [--out DIR]``.

Writes ``report.json`` and ``trials.csv`` into the output directory.  Exit
codes: 0 when every assertion passes, 1 when one fails, 2 on a bad config.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import atom, fourier, opnorm, sparse
from .dyadic import DyadicCube, Signal
from .operators import ExponentTriple, hedberg_ratio, pointwise_bound_slack

SCHEMA_VERSION = 1
EXPERIMENTS = ("opnorm-dyadic", "equivalence", "adjoint-gap", "sparse-certify", "fourier-verify", "atom-build",
               "hedberg", "ppn")
_FIELDS = {"experiment", "dim", "resolution", "exponents", "ensemble_size", "seed", "output", "params"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dim: int = 1
    resolution: int = 6
    exponents: Optional[ExponentTriple] = None
    ensemble_size: int = 10
    seed: int = 0
    output: str = "out"
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(d) - _FIELDS
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        exp = d.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")
        ints = {}
        for key, lo in (("dim", 1), ("resolution", 0), ("ensemble_size", 0), ("seed", 0)):
            v = d.get(key, getattr(cls, key))
            if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                raise ConfigError(f"{key} must be an integer >= {lo}, got {v!r}")
            ints[key] = v
        if ints["seed"] >= 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        ex = d.get("exponents")
        triple = None
        if ex is not None:
            if not isinstance(ex, dict) or set(ex) - {"p", "q", "r", "alpha"} or "p" not in ex:
                raise ConfigError("exponents must be an object with p and some of q, r, alpha")
            try:
                vals = {k: (math.inf if v == "inf" else float(v)) for k, v in ex.items()}
                triple = ExponentTriple(n=ints["dim"], **vals)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad exponents: {e}") from None
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        output = d.get("output", "out")
        if not isinstance(output, str) or not output:
            raise ConfigError("output must be a nonempty path string")
        return cls(exp, ints["dim"], ints["resolution"], triple, ints["ensemble_size"], ints["seed"], output, params)

    def param(self, name: str, default):
        v = self.params.get(name, default)
        if default is not None and not isinstance(v, type(default)) and not (
                isinstance(default, float) and isinstance(v, int) and not isinstance(v, bool)):
            raise ConfigError(f"param {name!r} must be {type(default).__name__}, got {v!r}")
        return v

    def need_exponents(self) -> ExponentTriple:
        if self.exponents is None:
            raise ConfigError(f"{self.experiment} needs exponents")
        return self.exponents

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "dim": self.dim,
            "resolution": self.resolution,
            "exponents": None if self.exponents is None else self.exponents.to_json(),
            "ensemble_size": self.ensemble_size,
            "seed": self.seed,
            "params": self.params,
        }


def sanitize(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): sanitize(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [sanitize(v) for v in x]
    if isinstance(x, np.ndarray):
        return sanitize(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def _streams(cfg: ExperimentConfig, n: Optional[int] = None) -> list:
    ss = np.random.SeedSequence(cfg.seed)
    return [np.random.default_rng(s) for s in ss.spawn(cfg.ensemble_size if n is None else n)]


def _trial_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 32))


# ---------------------------------------------------------------------------
# experiments: each returns (columns, rows, summary, assertions)
# ---------------------------------------------------------------------------


def run_opnorm(cfg: ExperimentConfig):
    triple = cfg.need_exponents()
    budget = cfg.param("budget", 32)
    density = cfg.param("density", 0.5)
    cols = ["trial", "lower_bound", "method", "candidates_tried", "reproduced", "power_value", "power_gap"]
    rows, reproduced, dominated = [], True, True
    for i, rng in enumerate(_streams(cfg)):
        g = opnorm.random_symbol(rng, cfg.dim, cfg.resolution, density)
        seed = _trial_seed(rng)
        est = opnorm.estimate_opnorm_dyadic(g, triple, budget, seed)
        q = triple.p_star if triple.q is None else triple.q
        again = opnorm.evaluate(g, est.witness, triple.p, q)
        ok = abs(again - est.lower_bound) <= 1e-10 * max(est.lower_bound, 1e-300)
        reproduced &= ok
        pw, gap = None, None
        if triple.q == 2 and triple.p == 2:
            pe, _ = opnorm.power_iteration_l2(g, seed=seed)
            pw = pe.lower_bound
            gap = pw / est.lower_bound if est.lower_bound > 0 else None
            dominated &= pw >= est.lower_bound * (1 - 1e-10)
        rows.append([i, est.lower_bound, est.method, est.candidates_tried, ok, pw, gap])
    summary = {"max_lower_bound": max((r[1] for r in rows), default=None)}
    return cols, rows, summary, {"witness_reproduced": reproduced, "power_dominates_search": dominated}


def run_equivalence(cfg: ExperimentConfig):
    triple = cfg.need_exponents()
    budget = cfg.param("budget", 32)
    window = cfg.param("window", 20.0)
    density = cfg.param("density", 0.5)
    family = cfg.param("family", "random")
    cols = ["trial", "estimate", "method", "symbol_norm", "symbol_norm_kind", "ratio"]
    rows = []
    if family == "random":
        symbols = [opnorm.random_symbol(rng, cfg.dim, cfg.resolution, density) for rng in _streams(cfg)]
    elif family == "single":
        symbols = [opnorm.single_coefficient_symbol(cfg.dim, cfg.resolution, 1 + i % max(cfg.resolution - 1, 1))
                   for i in range(cfg.ensemble_size)]
    elif family == "example":
        if cfg.dim != 1:
            raise ConfigError("the example family lives on the line")
        symbols = [opnorm.example_symbol(l, cfg.resolution) for l in range(2, min(2 + cfg.ensemble_size,
                                                                                   cfg.resolution))]
    else:
        raise ConfigError(f"unknown family {family!r}")
    for i, g in enumerate(symbols):
        t = opnorm.equivalence_trial(g, triple, budget, cfg.seed + i)
        rows.append([i, t["estimate"], t["method"], t["symbol_norm"], t["symbol_norm_kind"], t["ratio"]])
    summary = opnorm.summarize([r[5] for r in rows], window)
    return cols, rows, summary, {"window": summary["pass"]}


def run_adjoint_gap(cfg: ExperimentConfig):
    triple = cfg.need_exponents()
    if cfg.dim != 1:
        raise ConfigError("the adjoint example lives on the line")
    levels = cfg.param("levels", [2, 3, 4, 5, 6])
    cols = ["l", "symbol_norm", "direct_lower_bound", "extremal_adjoint_max", "adjoint_estimate",
            "adjoint_bound", "gap", "growth"]
    rows, prev = [], None
    exact, bound_ok, growth_ok = True, True, True
    target = 2.0 ** (1 - 1.0 / triple.q)
    for l in levels:
        if l + 1 > cfg.resolution:
            raise ConfigError(f"level {l} needs resolution at least {l + 1}")
        r = opnorm.adjoint_gap(l, triple.q, triple.p, J=cfg.resolution, seed=cfg.seed)
        exact &= r["symbol_norm"] == 1.0 and r["square_function_is_indicator"]
        bound_ok &= abs(r["extremal_adjoint_max"] - r["adjoint_bound"]) <= 1e-12 * r["adjoint_bound"]
        bound_ok &= r["adjoint_estimate"] <= r["adjoint_bound"] * (1 + 1e-12)
        growth = None if prev is None else r["gap"] / prev
        if growth is not None:
            growth_ok &= target / 2 <= growth <= target * 2
        prev = r["gap"]
        rows.append([l, r["symbol_norm"], r["direct_lower_bound"], r["extremal_adjoint_max"],
                     r["adjoint_estimate"], r["adjoint_bound"], r["gap"], growth])
    summary = {"growth_target": target}
    return cols, rows, summary, {"symbol_norm_exact": exact, "adjoint_bound": bound_ok, "growth": growth_ok}


def run_sparse(cfg: ExperimentConfig):
    cmax = cfg.param("constant_bound", 8.0)
    density = cfg.param("density", 0.3)
    eta = cfg.param("eta", 0.5)
    cols = ["trial", "resolution", "cubes", "C", "C_gamma", "min_witness_ratio", "passed"]
    rows, certs, ok = [], [], True
    for i, rng in enumerate(_streams(cfg)):
        gq = sparse.random_cube_weights(rng, cfg.dim, cfg.resolution, density)
        fam, cert = sparse.llo_dominate(sparse.lemma33_localization(gq), DyadicCube.root(cfg.dim),
                                        sparse.SparseConfig(eta=eta, dim=cfg.dim))
        good = cert.passed and cert.constants["C"] <= cmax
        ok &= good
        rows.append([i, cfg.resolution, len(fam.entries), cert.constants["C"], cert.constants["C_gamma"],
                     cert.constants["min_witness_ratio"], good])
        certs.append({"trial": i, "certificate": cert.to_json(), "family": fam.to_json()})
    summary = {"max_C": max((r[3] for r in rows), default=None), "certificates": certs}
    return cols, rows, summary, {"certified": ok}


def run_fourier(cfg: ExperimentConfig):
    triple = cfg.exponents or ExponentTriple(2.0, q=1.0)
    window = cfg.param("window", 20.0)
    budget = cfg.param("budget", 32)
    fam = fourier.build_lp_family(cfg.resolution)
    N = fam.size
    cols = ["trial", "symbol_norm", "estimate", "ratio", "bump_ratio", "identity_residual"]
    rows = []
    ident = 0.0
    for i, rng in enumerate(_streams(cfg)):
        g = fourier.random_band_signal(rng, fam)
        s1 = fourier.sublinear_square(g, fourier.PeriodicSignal.constant(1.0, N), fam)
        res = float(np.abs(s1 - fourier.lp_square(g, fam)).max())
        ident = max(ident, res)
        if triple.r is None or math.isinf(triple.r):
            sn = fourier.bmo_norm(g)
        else:
            sn = fourier.dot_hr_norm(g, fam, triple.r)
        est = fourier.estimate_sublinear_norm(g, fam, triple.p, triple.q, triple.r, budget, rng)
        bump = fourier.modulated_bump_test(g, fam, 2.0, 4.0, 4, rng, alpha=0.25)
        rows.append([i, sn, est["lower_bound"], est["lower_bound"] / sn if sn > 0 else math.nan, bump["ratio"],
                     res])
    win = opnorm.summarize([r[3] for r in rows], window)
    bump_win = opnorm.summarize([r[4] for r in rows], window)
    # BMO convolution sweep around a logarithmic singularity
    x = (np.arange(N) + 0.5) / N
    glog = fourier.PeriodicSignal(np.log(np.minimum(x, 1 - x)))
    L = N // 64
    bmo = fourier.bmo_norm(glog)
    sweep = [fourier.bmo_convolution_bound(glog, N - L // 2, L, 2.0 ** j * L / N, bmo) for j in range(1, 6)]
    sweep_flat = max(sweep) / min(sweep) <= 4
    # sparse square function: remainder scales like 1/alpha
    rem_ok, certs_ok, scal = True, True, []
    for rng in _streams(cfg, 3):
        g = fourier.random_band_signal(rng, fam)
        masses = []
        for a in (2.0, 4.0, 8.0):
            _, cert = fourier.continuous_sparse_square(g, fam, a, DyadicCube.root(1))
            certs_ok &= cert.passed
            masses.append(a * cert.constants["remainder_mass"])
        scal.append(max(masses) / min(masses))
        rem_ok &= scal[-1] <= 2
    summary = {
        "family": {k: v for k, v in fam.to_json().items() if k in ("a", "b", "a_prime", "c", "m", "jmin", "jmax")},
        "partition_residual": fam.certificate["partition_residual"],
        "residue_separation": fam.certificate["separation_ok"],
        "identity_residual": ident,
        "window": win,
        "bump_window": bump_win,
        "bmo_sweep": sweep,
        "remainder_scaling": scal,
    }
    asserts = {
        "partition": fam.certificate["partition_ok"],
        "separation": fam.certificate["separation_ok"],
        "identity": ident <= 1e-10,
        "window": win["pass"],
        "bump_window": bump_win["pass"],
        "bmo_sweep_flat": sweep_flat,
        "sparse_certificates": certs_ok,
        "remainder_scaling": rem_ok,
    }
    return cols, rows, summary, asserts


def run_atom(cfg: ExperimentConfig):
    alphas = cfg.param("alphas", [2.0, 4.0])
    ps = cfg.param("ps", [0.5, 1.0])
    cols = ["alpha", "p", "degree", "big_radius", "far_center_distance", "moment_max", "lower_bound_min"]
    rows, atoms, ok = [], [], True
    for a in alphas:
        for p in ps:
            try:
                A = atom.build_atom(alpha=float(a), p=float(p), n=cfg.dim)
            except NotImplementedError as e:
                raise ConfigError(str(e)) from None
            c = A.certificate
            ok &= c["moments_ok"] and c["lower_bound_ok"]
            rows.append([a, p, A.poly_degree, A.big_radius, A.far_center_distance, c["moment_max"],
                         c["lower_bound_min"]])
            atoms.append(A.to_json())
    return cols, rows, {"atoms": atoms}, {"atoms_certified": ok}


def run_hedberg(cfg: ExperimentConfig):
    triple = cfg.need_exponents()
    if triple.alpha is None:
        raise ConfigError("hedberg needs alpha")
    cmax = cfg.param("constant_bound", 10.0)
    density = cfg.param("density", 0.5)
    cols = ["trial", "max_ratio", "min_pointwise_slack"]
    rows, ok, pw = [], True, True
    for i, rng in enumerate(_streams(cfg)):
        g = opnorm.random_symbol(rng, cfg.dim, cfg.resolution, density)
        f = Signal(cfg.dim, cfg.resolution, rng.normal(size=(1 << cfg.resolution,) * cfg.dim))
        ratio = float(hedberg_ratio(g, f, triple).values.max())
        slack = float(pointwise_bound_slack(g, f).min())
        ok &= ratio <= cmax
        pw &= slack >= -1e-12
        rows.append([i, ratio, slack])
    summary = {"max_ratio": max((r[1] for r in rows), default=None), "constant_bound": cmax}
    return cols, rows, summary, {"hedberg_bounded": ok, "pointwise_bound": pw}


def run_ppn(cfg: ExperimentConfig):
    # Nikolskii runs p <= q, outside the paraproduct exponent relation
    p = cfg.param("p", 1.0)
    q = cfg.param("q", 2.0)
    if not 0 < p <= q:
        raise ConfigError("ppn needs 0 < p <= q")
    t = cfg.param("bandwidth", 32.0)
    N = 1 << cfg.resolution
    if not 2 * t < N:
        raise ConfigError(f"bandwidth {t} does not fit a grid of {N} samples")
    # on the torus |f|_q <= (2t+1)^{1/p-1/q} |f|_p for bandwidth t
    cmax = cfg.param("constant_bound", (2.0 + 1.0 / t) ** (1.0 / p - 1.0 / q))
    cols = ["trial", "ratio", "sampling_ratio"]
    rows, ok = [], True
    k = fourier.frequencies(N)
    for i, rng in enumerate(_streams(cfg)):
        spec = (rng.normal(size=N) + 1j * rng.normal(size=N)) * (np.abs(k) <= t)
        f = fourier.PeriodicSignal.from_spectrum(spec)
        r = fourier.ppn_check(f, t, p, q)
        ok &= r["ratio"] <= cmax
        rows.append([i, r["ratio"], r["sampling_ratio"]])
    const = fourier.ppn_check(fourier.PeriodicSignal.constant(1.0, N), 1.0, p, q)["ratio"]
    dir_ratios = []
    for tt in (t / 2, t):
        D = fourier.PeriodicSignal.from_spectrum((np.abs(k) <= tt).astype(complex))
        dir_ratios.append(fourier.ppn_check(D, tt, p, q)["ratio"])
    summary = {"constant_bound": cmax, "constant_ratio": const, "dirichlet": dir_ratios,
               "max_ratio": max((r[1] for r in rows), default=None)}
    stable = max(dir_ratios) / min(dir_ratios) <= 2
    return cols, rows, summary, {"bounded": ok, "constant_exact": const == 1.0, "dirichlet_stable": stable}


RUNNERS = {
    "opnorm-dyadic": run_opnorm,
    "equivalence": run_equivalence,
    "adjoint-gap": run_adjoint_gap,
    "sparse-certify": run_sparse,
    "fourier-verify": run_fourier,
    "atom-build": run_atom,
    "hedberg": run_hedberg,
    "ppn": run_ppn,
}


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def run_and_emit(cfg: ExperimentConfig, out: Optional[Path] = None) -> tuple[dict, str]:
    """Run one experiment; returns (report, csv text) and writes both when ``out`` is given."""
    cols, rows, summary, asserts = RUNNERS[cfg.experiment](cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    report = sanitize({
        "schema": {"version": SCHEMA_VERSION, "csv_columns": cols},
        "config": cfg.to_json(),
        "trials": len(rows),
        "summary": summary,
        "assertions": asserts,
        "pass": all(asserts.values()),
    })
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n")
        (out / "trials.csv").write_text(buf.getvalue())
    return report, buf.getvalue()


def main(argv: Optional[list] = None) -> int:
    ap = argparse.ArgumentParser(prog="paraprod", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)
    try:
        raw = json.loads(args.config.read_text())
    except OSError as e:
        print(f"config error: cannot read {args.config}: {e.strerror}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as e:
        print(f"config error: {args.config} is not valid JSON: {e}", file=sys.stderr)
        return 2
    try:
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        raw.setdefault("experiment", args.experiment)
        if raw["experiment"] != args.experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, command asked for {args.experiment!r}")
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(raw)
        out = args.out or Path(cfg.output)
        report, _ = run_and_emit(cfg, out)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"output error: {e}", file=sys.stderr)
        return 2
    status = "PASS" if report["pass"] else "FAIL"
    print(f"{cfg.experiment}: {status} ({report['trials']} trials) -> {out}")
    return 0 if report["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())
