"""Experiment configuration and the command implementations behind the CLI."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path


from . import arith, model, saddle, series
from .errors import AddlabError, ConfigError, ResourceError
from .psi import PsiDistribution, closed_psi, lattice_detect, load_psi, psi_from_prime_data

SCHEMA_VERSION = 1
METHODS = ("dp", "mc")
LEVELS = {"normal": "NORMAL", "s": "S_ONLY", "s_only": "S_ONLY", "full": "FULL"}


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    fn: str = "omega"
    x: int = 10**6
    y: int | None = None
    deltas: list = field(default_factory=lambda: [1.0, 2.0])
    psi: str | None = None
    normalize: str = "SIGMA"
    method: str = "dp"
    samples: int = 10**6
    seed: int = 0
    out: str | None = None
    level: str = "FULL"
    k: int = 12
    L_truncation: int = 10**7


def parse_deltas(spec) -> list[float]:
    """'a:b:step' (inclusive) or 'd1,d2,...'."""
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    spec = str(spec).strip()
    try:
        if ":" in spec:
            a, b, st = (float(v) for v in spec.split(":"))
            if not st > 0 or b < a:
                raise ConfigError(f"bad delta range {spec!r}")
            n = int(round((b - a) / st))
            if a + n * st > b + 1e-9 * max(1.0, abs(b)):
                n -= 1
            return [a + i * st for i in range(n + 1)]
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad delta grid {spec!r}: {exc}") from exc


def parse_fn(spec: str) -> arith.AdditiveFunction:
    """omega | frac[:alpha] | table:PATH | scaled:C:SPEC."""
    spec = spec.strip()
    head, _, rest = spec.partition(":")
    head = head.lower()
    if head == "omega" and not rest:
        return arith.omega()
    if head == "frac":
        if not rest or rest.lower() == "sqrt2":
            return arith.frac_alpha()
        try:
            return arith.frac_alpha(Fraction(rest))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad alpha {rest!r}") from exc
    if head == "table" and rest:
        return arith.load_table(rest)
    if head == "scaled" and rest:
        c, _, base = rest.partition(":")
        try:
            return arith.scaled(parse_fn(base), float(c))
        except ValueError as exc:
            raise ConfigError(f"bad scale {c!r}") from exc
    raise ConfigError(f"unknown function spec {spec!r}")


def load_config(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown fields {unknown}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    return doc


def make_config(file_values: dict, overrides: dict) -> ExperimentConfig:
    vals = dict(file_values)
    vals.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig(**vals)
    cfg.x = arith.as_int_x(cfg.x)
    if cfg.y is not None:
        cfg.y = arith.as_int_x(cfg.y, "y")
    cfg.deltas = parse_deltas(cfg.deltas)
    cfg.normalize = cfg.normalize.upper()
    if cfg.normalize not in ("SIGMA", "B"):
        raise ConfigError("normalize must be sigma or B")
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    lvl = LEVELS.get(str(cfg.level).lower())
    if lvl is None:
        raise ConfigError("level must be normal, s or full")
    cfg.level = lvl
    if not 0 <= int(cfg.k) <= series.K_MAX:
        raise ConfigError(f"K must be in 0..{series.K_MAX}, got {cfg.k}")
    cfg.samples = int(float(cfg.samples))
    return cfg


def resolve_psi(cfg: ExperimentConfig, f) -> tuple[PsiDistribution, str]:
    if cfg.psi:
        if cfg.psi.lower() == "empirical":
            return psi_from_prime_data(f, cfg.x), "EMPIRICAL"
        return load_psi(cfg.psi), "FILE"
    psi = closed_psi(f)
    if psi is not None:
        return psi, "CLOSED"
    return psi_from_prime_data(f, cfg.x), "EMPIRICAL"


# ---------------------------------------------------------------- commands

def cmd_sieve(cfg: ExperimentConfig) -> dict:
    f = parse_fn(cfg.fn)
    stats = arith.prime_stats(f, cfg.x)
    tail = arith.empirical_tail(f, cfg.x, cfg.deltas, cfg.normalize)
    return {"stats.json": stats.to_json(), "tail.json": tail.to_json()}


def cmd_tail(cfg: ExperimentConfig) -> dict:
    f = parse_fn(cfg.fn)
    if cfg.y is not None:
        tab = arith.truncated_tail(f, cfg.x, cfg.y, cfg.deltas, cfg.normalize)
    else:
        tab = arith.empirical_tail(f, cfg.x, cfg.deltas, cfg.normalize)
    return {"tail.json": tab.to_json()}


def _model_estimate(cfg, ens, delta, mu=None, sigma=None):
    kw = {} if cfg.method == "dp" else {"N": cfg.samples, "seed": cfg.seed}
    return model.centered_tail(ens, delta, mu=mu, sigma=sigma, method=cfg.method, **kw)


def cmd_model(cfg: ExperimentConfig) -> dict:
    f = parse_fn(cfg.fn)
    ens = model.ensemble(f, cfg.x)
    rows = []
    for d in cfg.deltas:
        est = _model_estimate(cfg, ens, d)
        rows.append({"delta": d, "threshold": ens.mu + d * ens.sigma, "estimate": est.to_json()})
    return {"model.json": {"x": cfg.x, "fn": f.name, "mu": ens.mu, "sigma": ens.sigma, "rows": rows}}


def _c_grid(x):
    top = max(x, 10**7)
    return [top // 100, top // 10, top]


def _lattice_inputs(f, psi, x, L_P):
    """(f, Psi, LatticeInputs) rescaled so the lattice is Z, or (f, Psi, None).

    The g-part is tabulated up to the L truncation prime, the h-part's law
    uses the primes up to x.
    """
    rep = lattice_detect(psi)
    if not rep.is_lattice:
        return f, psi, None, rep
    if abs(rep.span - 1.0) > 1e-12:
        f = arith.scaled(f, 1.0 / rep.span)
        psi = psi.scaled(1.0 / rep.span)
    split = model.split_gh(f, max(x, L_P))
    split = model.GHSplit(split.g_part, split.h_part, split.S_h[split.S_h <= x])
    h = dict(zip(split.S_h.tolist(), split.h_part.prime_values(split.S_h).tolist()))
    if len(h) > model.MAX_SUPPORT:
        raise ResourceError(f"h-part has {len(h)} primes; P_h needs at most {model.MAX_SUPPORT}")

    def p_h(a, v):
        return model.p_h_factor(h, a, v).value

    return f, psi, saddle.LatticeInputs(split.g_part, p_h), rep


def _predict(f, psi, x, deltas, level, L_P):
    """Predictions for all deltas at one level, plus provenance."""
    stats = arith.prime_stats(f, x)
    prov = {}
    if level != "FULL":
        preds = [saddle.tail_asymptotic(f, psi, x, d, level, mu=stats.mu, sigma=stats.sigma)
                 if (d > 0 or level == "NORMAL") else None for d in deltas]
        return preds, prov
    if f.max_prime is not None:
        L_P = max(1000, min(L_P, f.max_prime))
    f2, psi2, lat, rep = _lattice_inputs(f, psi, x, L_P)
    stats2 = arith.prime_stats(f2, x)
    c = saddle.c_constant(f2, psi2, _c_grid(x))
    prov.update(c_f=c.value, c_f_uncertainty=c.uncertainty, c_f_grid=list(c.grid), c_f_warning=c.warning,
                L_truncation=L_P, lattice=rep.is_lattice, lattice_span=rep.span)
    preds = []
    for d in deltas:
        if d <= 0:
            preds.append(None)
            continue
        preds.append(saddle.tail_asymptotic(f2, psi2, x, d, "FULL", mu=stats2.mu, sigma=stats2.sigma,
                                            c_f=c.value, lattice_inputs=lat, lattice=rep.is_lattice, L_P=L_P))
    return preds, prov


def cmd_asym(cfg: ExperimentConfig) -> dict:
    f = parse_fn(cfg.fn)
    psi, src = resolve_psi(cfg, f)
    preds, prov = _predict(f, psi, cfg.x, cfg.deltas, cfg.level, cfg.L_truncation)
    rows = [p.to_json() if p is not None else {"delta": d, "prediction": None, "reason": "Delta must be > 0"}
            for d, p in zip(cfg.deltas, preds)]
    prov.update(psi_source=src, level=cfg.level)
    return {"asym.json": {"x": cfg.x, "fn": f.name, "rows": rows, "provenance": prov}}


def cmd_series(cfg: ExperimentConfig) -> dict:
    K = int(cfg.k)
    out = {}
    if cfg.psi:
        psi = load_psi(cfg.psi)
        co = series.lambda_psi(psi, K).to_json()
        if K >= 2:
            co["exponent_series"] = saddle.exponent_series(psi, K).tolist()
        out["series.json"] = co
    else:
        f = parse_fn(cfg.fn)
        ens = model.ensemble(f, cfg.x)
        co = series.lambda_f(ens, K).to_json()
        co["moments"] = series.moment_sequence(ens, max(K - 1, 0)).tolist()
        co["x"] = cfg.x
        out["series.json"] = co
    return out


def _ratio(num, den):
    return {"num": num, "den": den, "value": (num / den) if (num is not None and den) else None}


def _cell(value, method, **extra):
    return {"value": value, "method": method, **extra}


def cmd_compare(cfg: ExperimentConfig) -> dict:
    f = parse_fn(cfg.fn)
    x = cfg.x
    psi, src = resolve_psi(cfg, f)
    stats = arith.prime_stats(f, x)
    ens = model.ensemble(f, x)
    y = cfg.y if cfg.y is not None else max(3, int(math.floor(x ** (1.0 / stats.loglog_x))))
    stats_y = arith.prime_stats(f, y)
    ens_y = model.ensemble(f, y)
    tail = arith.empirical_tail(f, x, cfg.deltas, "SIGMA")
    ttail = arith.truncated_tail(f, x, y, cfg.deltas, "SIGMA")
    prov = {"psi_source": src, "model_method": cfg.method.upper(), "y": y,
            "u": math.log(x) / math.log(y)}
    if cfg.method == "mc":
        prov.update(seed=cfg.seed, samples=cfg.samples)
    levels = {}
    for lvl in ("NORMAL", "S_ONLY", "FULL"):
        try:
            preds, p = _predict(f, psi, x, cfg.deltas, lvl, cfg.L_truncation)
            prov.update(p)
        except (AddlabError, ValueError) as exc:
            preds = [None] * len(cfg.deltas)
            prov[f"{lvl.lower()}_unavailable"] = str(exc)
        levels[lvl] = preds
    rows = []
    for i, d in enumerate(cfg.deltas):
        row_t, row_y = tail.rows[i], ttail.rows[i]
        m = _model_estimate(cfg, ens, d, stats.mu, stats.sigma)
        my = _model_estimate(cfg, ens_y, d, stats_y.mu, stats_y.sigma)
        z = max(d, 0.0) / stats.sigma
        A = saddle.a_factor(psi, z)
        pois = model.poisson_tail(stats.sigma2, d)
        pred = {}
        for lvl, preds in levels.items():
            p = preds[i]
            pred[lvl] = None if p is None else _cell(p.prediction, "ASYMPTOTIC", regime=p.regime,
                                                      log_value=p.log_prediction, v=p.v)
        rows.append({
            "delta": d,
            "D": _cell(row_t.D, "SIEVE", count=row_t.count),
            "model": _cell(m.value, m.method, **({"stderr": m.stderr, "seed": m.seed} if m.method == "MC" else {})),
            "A_factor": _cell(A, "CLOSED", z=z, z_sigma_psi=max(d, 0.0) / math.sqrt(psi.moment(2) * stats.loglog_x)),
            "poisson": _cell(pois, "CLOSED", lam=stats.sigma2),
            "D_truncated": _cell(row_y.D, "SIEVE", count=row_y.count, y=y),
            "model_truncated": _cell(my.value, my.method),
            "predictions": pred,
            "ratios": {
                "D_over_model": _ratio(row_t.D, m.value),
                "D_over_A_model": _ratio(row_t.D, A * m.value),
                "D_over_poisson": _ratio(row_t.D, pois),
                "Dtrunc_over_model_trunc": _ratio(row_y.D, my.value),
            },
        })
    report = {"x": x, "fn": f.name, "stats": stats.to_json(), "stats_y": stats_y.to_json(),
              "rows": rows, "provenance": prov}
    return {"compare.json": report}


COMMANDS = {
    "sieve": cmd_sieve,
    "tail": cmd_tail,
    "model": cmd_model,
    "asym": cmd_asym,
    "series": cmd_series,
    "compare": cmd_compare,
}
