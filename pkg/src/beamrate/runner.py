"""Execute an :class:`~beamrate.config.ExperimentConfig` into a :class:`SweepResult`."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from beamrate.channels import generate, normalize
from beamrate.codebook import build_codebook
from beamrate.errors import BeamrateError, UnreachableRateError
from beamrate.evaluation import (
    BEAMLESS, GOB, SUB, Scheme, admissible_n, best_training_tradeoff, min_beams_for_loss,
    required_snr, scheme_sum_rate, snr_loss, sweep_rates, tradeoff_curve,
)
from beamrate.results import SweepResult

__all__ = ["CellError", "prepare", "run"]

log = logging.getLogger(__name__)


class CellError(BeamrateError):
    """A numeric failure inside one result cell."""

    def __init__(self, cell, cause):
        super().__init__(f"cell {cell} failed: {cause}")
        self.cell = cell
        self.cause = cause


def _db(x):
    return 10.0 * math.log10(x)


def prepare(cfg):
    """Channel tensor and codebook for a config."""
    t = generate(cfg.scenario)
    if cfg.normalize:
        t = normalize(t)
    cb = build_codebook(t.M, cfg.M_prime or 4 * t.M)
    return t, cb


def _n_values(cfg, tag, t):
    allowed = set(admissible_n(tag, t.K, t.M))
    if tag == "A-GOB":
        return [1]
    if cfg.N:
        return sorted(n for n in set(cfg.N) if n in allowed)
    return sorted(allowed)


def _cell(name, fn):
    def wrapped():
        try:
            return fn()
        except (BeamrateError, ArithmeticError, np.linalg.LinAlgError) as exc:
            raise CellError(name, exc) from exc
    return wrapped


def _tdd_tasks(cfg, t):
    tasks = []
    for rho_db, rho in zip(cfg.rho_db, cfg.rho):
        tasks.append(_cell(f"(TDD, rho_db={rho_db})",
                           lambda rho=rho: scheme_sum_rate(t, Scheme("TDD"), rho)))
    return tasks


def _rate_tasks(cfg, t, cb, nested):
    tasks, keys = [], []
    for rho_db, rho in zip(cfg.rho_db, cfg.rho):
        for tag in cfg.schemes:
            if tag == "TDD":
                continue
            if tag in BEAMLESS:
                ns = [0]
            else:
                ns = _n_values(cfg, tag, t)
                if not ns:
                    continue
            scheme = Scheme(tag, ns[0], cb, cfg.hermitian)
            if nested or tag in BEAMLESS:
                tasks.append(_cell(f"({tag}, N={ns}, rho_db={rho_db})",
                                   lambda s=scheme, ns=ns, rho=rho: sweep_rates(t, s, ns, rho)))
                keys.append((tag, rho_db))
            else:
                for n in ns:
                    tasks.append(_cell(
                        f"({tag}, N={n}, rho_db={rho_db})",
                        lambda s=scheme.with_n(n), n=n, rho=rho: {n: scheme_sum_rate(t, s, rho)}))
                    keys.append((tag, rho_db))
    return tasks, keys


def _run_rates(cfg, t, cb, pool, nested):
    tdd_vals = list(pool.map(lambda f: f(), _tdd_tasks(cfg, t)))
    tdd = dict(zip(cfg.rho_db, tdd_vals))
    tasks, keys = _rate_tasks(cfg, t, cb, nested)
    out = SweepResult()
    for rho_db, v in tdd.items():
        out.add("TDD", 0, rho_db, v, _ratio(v, v))
    for (tag, rho_db), rates in zip(keys, pool.map(lambda f: f(), tasks)):
        for n, v in rates.items():
            out.add(tag, n, rho_db, v, _ratio(v, tdd[rho_db]))
    return out


def _loss_flag(db):
    return f"loss_db={db + 0.0:.6f}"  # keeps a -0.0 input from printing a sign


def _ratio(a, b):
    return a / b if b > 0 else float("nan")


def _run_snr_loss(cfg, t, cb, pool):
    C = cfg.C_star
    rho_ref = _cell("(TDD, C_star)", lambda: required_snr(t, Scheme("TDD"), C))()
    out = SweepResult()
    out.add("TDD", 0, _db(rho_ref), C, 1.0, _loss_flag(0.0))

    def family(tag):
        ns = [0] if tag in BEAMLESS else _n_values(cfg, tag, t)
        deltas = {}
        for n in ns:
            s = Scheme(tag, n, cb, cfg.hermitian)
            try:
                deltas[n] = _cell(f"({tag}, N={n}, C_star={C})",
                                  lambda s=s: snr_loss(t, s, C, rho_ref))()
            except CellError as exc:
                if not isinstance(exc.cause, UnreachableRateError):
                    raise
                deltas[n] = None
        return tag, deltas

    for tag, deltas in pool.map(family, [s for s in cfg.schemes if s != "TDD"]):
        for n, d in deltas.items():
            if d is None:
                out.add(tag, n, float("nan"), C, float("nan"), "unreachable")
            else:
                out.add(tag, n, _db(d.rho_scheme), C, d.linear, _loss_flag(d.db))
        if tag in BEAMLESS:
            continue
        table = min_beams_for_loss({n: (d.linear if d else None) for n, d in deltas.items()},
                                   cfg.beta_db)
        for beta, n in table.items():
            status = "min-beams" if n is not None else "unreachable"
            out.add(tag, n or 0, float("nan"), C, float("nan"), f"{status};beta_db={beta:g}")
    return out


def _run_tradeoff(cfg, t, cb, pool):
    C = cfg.C_star
    rho_ref = _cell("(TDD, C_star)", lambda: required_snr(t, Scheme("TDD"), C))()
    out = SweepResult()
    out.add("TDD", 0, _db(rho_ref), C, 1.0, f"reference;m={t.M}")
    m_grid = sorted(set(cfg.m))

    def one(m):
        return _cell(f"(H-SUB, m={m}, C_star={C})",
                     lambda: tradeoff_curve(t, cfg.beta_db, C, [m], cfg.N, cb, cfg.n_subarrays))()

    for points, _ in pool.map(one, m_grid):
        for p in points:
            rho_db = _db(rho_ref / p.delta) if p.n is not None else float("nan")
            out.add("H-SUB", p.n or 0, rho_db, C, p.delta,
                    f"{p.flag};m={p.m};beta_db={p.beta_db:g}")
    return out


def _run_training(cfg, t, cb, pool):
    tdd_vals = list(pool.map(lambda f: f(), _tdd_tasks(cfg, t)))
    tdd = dict(zip(cfg.rho_db, tdd_vals))
    out = SweepResult()
    for rho_db, v in tdd.items():
        out.add("TDD", 0, rho_db, v, _ratio(v, v), "reference")
    cells = []
    for rho_db, rho in zip(cfg.rho_db, cfg.rho):
        for tag in cfg.schemes:
            if tag not in GOB + SUB:
                continue
            ns = _n_values(cfg, tag, t)
            if ns:
                s = Scheme(tag, ns[0], cb, cfg.hermitian)
                cells.append((tag, rho_db, _cell(
                    f"({tag}, rho_db={rho_db})",
                    lambda s=s, ns=ns, rho=rho: sweep_rates(t, s, ns, rho))))
    results = pool.map(lambda c: c[2](), cells)
    for (tag, rho_db, _), rates in zip(cells, results):
        for T_c in cfg.T_c:
            n_star, value = best_training_tradeoff(rates, tag, t.K, T_c)
            out.add(tag, n_star, rho_db, value, _ratio(value, tdd[rho_db]), f"T_c={T_c}")
    return out


def run(cfg, threads=1):
    """Run the configured experiment and return its rows.

    Cells are evaluated on a thread pool; rows are sorted before output, so
    the result does not depend on ``threads``.
    """
    t, cb = prepare(cfg)
    log.info("%s: K=%d M=%d L=%d M'=%d, %d thread(s)", cfg.experiment, t.K, t.M, t.L, cb.size,
             threads)
    for tag in cfg.schemes:
        if tag in SUB and cfg.experiment != "training" and cfg.N and not _n_values(cfg, tag, t):
            log.warning("%s: no N in %s satisfies K <= N <= M", tag, cfg.N)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        if cfg.experiment == "capacity":
            return _run_rates(cfg, t, cb, pool, nested=False)
        if cfg.experiment == "sweep-n":
            return _run_rates(cfg, t, cb, pool, nested=True)
        if cfg.experiment == "snr-loss":
            return _run_snr_loss(cfg, t, cb, pool)
        if cfg.experiment == "tradeoff":
            return _run_tradeoff(cfg, t, cb, pool)
        return _run_training(cfg, t, cb, pool)
