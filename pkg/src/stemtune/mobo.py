"""Multi-objective Bayesian optimization with Monte-Carlo EHVI.

Each objective gets an independent GP; the acquisition is the posterior
expectation of the hypervolume improvement, estimated with fixed base
samples so it is a deterministic, smooth function of the candidate.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import gp, pareto, rewards
from .errors import InvalidArgument, StemtuneError
from .image import readout, Image
from .optics import COEFFICIENTS, PRESETS, AberrationState
from .seeding import derive_seed
from .virtual_scope import DEFAULT_BOUNDS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    names: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if not self.names:
            raise InvalidArgument("search space needs at least one coefficient")
        if not len(self.names) == len(self.lower) == len(self.upper):
            raise InvalidArgument("names and bounds must have the same length")
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            if name not in COEFFICIENTS:
                raise InvalidArgument(f"unknown aberration coefficient {name!r}")
            if not lo < hi:
                raise InvalidArgument(f"{name}: lower bound {lo} must be below upper bound {hi}")
            if not lo <= 0.0 <= hi:
                raise InvalidArgument(f"{name}: bounds [{lo}, {hi}] must contain 0")

    @classmethod
    def preset(cls, name, bounds=None):
        if name not in PRESETS:
            raise InvalidArgument(f"unknown search space {name!r}; choose from {sorted(PRESETS)}")
        return cls.from_names(PRESETS[name], bounds)

    @classmethod
    def from_names(cls, names, bounds=None):
        bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
        return cls(tuple(names), [bounds[n][0] for n in names], [bounds[n][1] for n in names])

    @property
    def dim(self):
        return len(self.names)

    @property
    def lower_array(self):
        return np.array(self.lower)

    @property
    def upper_array(self):
        return np.array(self.upper)

    def bounds_dict(self):
        return {n: (lo, hi) for n, lo, hi in zip(self.names, self.lower, self.upper)}

    def to_unit(self, X):
        return (np.asarray(X, dtype=float) - self.lower_array) / (self.upper_array - self.lower_array)

    def from_unit(self, U):
        return self.lower_array + np.asarray(U, dtype=float) * (self.upper_array - self.lower_array)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower_array) and np.all(x <= self.upper_array))

    def state(self, x):
        return AberrationState.from_vector(x, self.names)


@dataclass(frozen=True)
class MoboConfig:
    n_init: int | None = None  # None -> 2d + 2
    n_iterations: int = 25
    mc_samples: int = 128
    n_candidates: int = 256
    n_refine: int = 5
    master_seed: int = 0
    gp_starts: int = 8
    initial_step: float = 0.1
    final_step: float = 0.001

    def __post_init__(self):
        counts = {
            "mc_samples": self.mc_samples,
            "n_candidates": self.n_candidates,
            "n_refine": self.n_refine,
            "gp_starts": self.gp_starts,
        }
        for name, value in counts.items():
            if int(value) < 1:
                raise InvalidArgument(f"{name} must be at least 1")
        if self.n_init is not None and self.n_init < 2:
            raise InvalidArgument("n_init must be at least 2")
        if self.n_iterations < 0:
            raise InvalidArgument("n_iterations must be nonnegative")

    def init_size(self, dim):
        return self.n_init if self.n_init is not None else 2 * dim + 2


def initial_design(space, n, seed):
    """Latin-hypercube design of ``n`` points inside the bounds."""
    if n < 2:
        raise InvalidArgument("initial design needs at least 2 points")
    sampler = qmc.LatinHypercube(d=space.dim, seed=np.random.default_rng(seed))
    return space.from_unit(sampler.random(n))


def _front_of(archive):
    if isinstance(archive, pareto.ParetoArchive):
        return archive.front_values
    return np.asarray(archive, dtype=float).reshape(-1, 2)


def base_samples(mc_samples, n_objectives, seed):
    return np.random.default_rng(seed).standard_normal((mc_samples, n_objectives))


def ehvi(models, archive, ref, X, mc_samples, seed):
    """Monte-Carlo EHVI at the rows of ``X`` (a single point gives a scalar).

    Draws are independent per objective. The same standard-normal base
    samples are reused for every candidate.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    front = _front_of(archive)
    z = base_samples(mc_samples, len(models), seed)
    means, stds = [], []
    for model in models:
        mean, var = model.posterior(X)
        means.append(mean)
        stds.append(np.sqrt(np.maximum(var, 0.0)))
    mean = np.stack(means, axis=1)  # (n, m)
    std = np.stack(stds, axis=1)
    draws = mean[:, None, :] + z[None, :, :] * std[:, None, :]  # (n, s, m)
    improvement = pareto.hvi_batch(front, ref, draws.reshape(-1, len(models)))
    values = improvement.reshape(len(X), mc_samples).mean(axis=1)
    # A point-mass posterior has EHVI equal to the HVI of its mean; take it
    # directly rather than through a rounded average of identical samples.
    certain = np.all(std == 0.0, axis=1)
    if np.any(certain):
        values[certain] = pareto.hvi_batch(front, ref, mean[certain])
    return float(values[0]) if single else values


def _pattern_search(objective, u0, f0, initial_step, final_step, max_polls=200):
    """Compass search in the unit cube; moves only on strict improvement."""
    u, f = u0.copy(), f0
    step = initial_step
    dim = len(u)
    evals = 0
    for _ in range(max_polls):
        if step < final_step:
            break
        polls = np.concatenate([u + step * np.eye(dim), u - step * np.eye(dim)])
        polls = np.clip(polls, 0.0, 1.0)
        values = objective(polls)
        evals += len(polls)
        best = int(np.argmax(values))
        if values[best] > f:
            u, f = polls[best], float(values[best])
        else:
            step *= 0.5
    return u, f, evals


def propose(models, archive, space, config, seed, ehvi_seed=None):
    """Next point to evaluate and diagnostic info.

    Returns ``(x_next, info)`` where info has the acquisition value, the
    number of EHVI evaluations and whether the exploration fallback fired.
    """
    if ehvi_seed is None:
        ehvi_seed = derive_seed(seed, 0, "ehvi")
    ref = archive.ref if isinstance(archive, pareto.ParetoArchive) else None
    if ref is None:
        ref = pareto.reference_point(_front_of(archive))
    front = _front_of(archive)

    def objective(U):
        return ehvi(models, front, ref, space.from_unit(U), config.mc_samples, ehvi_seed)

    rng = np.random.default_rng(seed)
    U = rng.uniform(size=(config.n_candidates, space.dim))
    values = objective(U)
    n_evals = len(U)

    if not np.max(values) > 0:
        total_var = sum(m.posterior(space.from_unit(U))[1] / m.prior_variance for m in models)
        best = int(np.argmax(total_var))
        log.info("EHVI is zero at every candidate; exploring max-variance point")
        x = space.from_unit(U[best])
        return x, {"ehvi": 0.0, "fallback": True, "n_evals": n_evals}

    # stable sort keeps the lowest index first among ties
    top = np.argsort(-values, kind="stable")[: config.n_refine]
    best_u, best_f = None, -np.inf
    for idx in top:
        u, f, evals = _pattern_search(
            objective, U[idx], float(values[idx]), config.initial_step, config.final_step
        )
        n_evals += evals
        if f > best_f:
            best_u, best_f = u, f
    x = np.clip(space.from_unit(best_u), space.lower_array, space.upper_array)
    return x, {"ehvi": float(best_f), "fallback": False, "n_evals": n_evals}


def fit_models(X, Y, space, config, seed):
    models = []
    for k in range(Y.shape[1]):
        cfg = gp.GPConfig(
            bounds=(space.lower_array, space.upper_array),
            n_starts=config.gp_starts,
            seed=derive_seed(seed, k, "gp_fit"),
        )
        models.append(gp.fit(X, Y[:, k], cfg))
    return models


def observe(env, state, mask=None):
    """Acquire, read out as recorded, and score. Returns (image, rewards, seed)."""
    image, _ = env.acquire(state)
    recorded = Image(readout(image.data), image.pixel_size, image.metadata)
    return recorded, rewards.evaluate(recorded, mask), env.last_seed


def run_mobo(env, space, config, log_writer=None):
    """Run the initial design and ``config.n_iterations`` BO steps against ``env``.

    ``log_writer`` (a :class:`trajectory.TrajectoryWriter`) receives one
    record per step. Returns ``(archive, records)``.
    """
    from .trajectory import TrajectoryRecord  # local: trajectory imports this module

    archive = pareto.ParetoArchive()
    records = []
    master = config.master_seed
    n_init = config.init_size(space.dim)
    design = initial_design(space, n_init, derive_seed(master, 0, "init"))
    latency = getattr(env, "unslept_latency", 0.0)

    def finish(step, phase, x, t0, t1, t2, seeds, models=None, info=None):
        state = space.state(x)
        image, reward, acq_seed = observe(env, state)
        t3 = time.perf_counter()
        seeds = dict(seeds, acquire=acq_seed)
        archive.add(x, reward.as_array())
        image_ref = log_writer.write_image(step, image) if log_writer else None
        record = TrajectoryRecord(
            step=step,
            phase=phase,
            active=list(space.names),
            action=state.coefficients(),
            image_ref=image_ref,
            rewards={"contrast": reward.contrast, "fft": reward.fft},
            timing={
                "hw_s": latency + (t3 - t2),
                "gp_fit_s": t1 - t0,
                "acq_opt_s": t2 - t1,
                "total_s": latency + (t3 - t0),
            },
            seeds=seeds,
            gp_hyper=[m.hyper.to_dict() for m in models] if models else None,
            reference_point=[float(v) for v in archive.ref],
            hypervolume=archive.hv,
            acquisition=info,
        )
        records.append(record)
        if log_writer:
            log_writer.append(record)

    def fail(step, phase, exc, x=None):
        record = TrajectoryRecord(
            step=step,
            phase=phase,
            active=list(space.names),
            action=space.state(x).coefficients() if x is not None else None,
            error=f"{type(exc).__name__}: {exc}",
        )
        records.append(record)
        if log_writer:
            log_writer.append(record)

    step = 0
    for x in design:
        t0 = time.perf_counter()
        try:
            finish(step, "init", x, t0, t0, t0, {"init": derive_seed(master, 0, "init")})
        except (StemtuneError, ArithmeticError, np.linalg.LinAlgError) as exc:
            fail(step, "init", exc, x)
            raise
        step += 1

    for it in range(1, config.n_iterations + 1):
        seeds = {role: derive_seed(master, it, role) for role in ("gp_fit", "candidates", "ehvi")}
        x = None
        try:
            t0 = time.perf_counter()
            X = np.array(archive.X)
            models = fit_models(X, archive.Y, space, config, seeds["gp_fit"])
            t1 = time.perf_counter()
            x, info = propose(models, archive, space, config, seeds["candidates"], seeds["ehvi"])
            t2 = time.perf_counter()
            finish(step, "bo", x, t0, t1, t2, seeds, models, info)
        except (StemtuneError, ArithmeticError, np.linalg.LinAlgError) as exc:
            fail(step, "bo", exc, x)
            raise
        step += 1

    return archive, records
