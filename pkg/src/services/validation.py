"""
Validation Service Module
Monte-Carlo suites that check the error contracts of the noise channel and
the emulated subroutines. Trial t uses the seed base ^ t.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from core.errors import ConfigError
from logic.gmm import DIAGONAL, Covariance, CovarianceType, GmmParams, softmax
from logic.noise_channel import NoiseSpec, apply as apply_noise, verify_bounds
from logic.quantum_emulator import (
    TOMOGRAPHY_CONSTANT,
    amplitude_error_bound,
    amplitude_outcome_distribution,
    amplitude_success_probability,
    boosted_success_probability,
    compose_error_claims,
    quadratic_form_estimate,
    tomography_l2,
    tomography_linf,
)
from services.profiler import kappa_stability, logdet_chebyshev, logdet_exact
from services.synthetic import SyntheticSpec, sample_mixture

logger = logging.getLogger("QemLab")

AMPLITUDE_SUCCESS = 8.0 / math.pi ** 2


@dataclass
class SuiteResult:
    suite: str
    passed: bool
    trials: int
    max_observed: float
    bound: float
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def run_trials(fn: Callable[[int, np.random.Generator], Any], trials: int, base_seed: int,
               threads: int = 1, offset: int = 0) -> List[Any]:
    """
    Run fn(trial, rng) for every trial with rng seeded by base_seed ^ (offset + trial)

    Results come back in trial order regardless of the thread count.
    """
    def task(t: int) -> Any:
        return fn(t, np.random.default_rng(base_seed ^ (offset + t)))

    if threads <= 1:
        return [task(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(task, range(trials)))


def _random_spd(d: int, low: float, high: float, rng: np.random.Generator) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eigvals = rng.uniform(low, high, size=d)
    matrix = (q * eigvals) @ q.T
    return 0.5 * (matrix + matrix.T)


# ============================================================================
# SUITES
# ============================================================================

def suite_lipschitz(trials: int, seed: int, threads: int = 1) -> SuiteResult:
    """Softmax is sqrt(2)-Lipschitz in l2"""
    def trial(t: int, rng: np.random.Generator) -> float:
        k = int(rng.integers(2, 65))
        x = rng.standard_normal(k) * rng.uniform(0.1, 5.0)
        y = x + rng.standard_normal(k) * rng.uniform(1e-3, 3.0)
        return float(np.linalg.norm(softmax(x) - softmax(y)) / np.linalg.norm(x - y))

    ratios = run_trials(trial, trials, seed, threads)
    worst = max(ratios)
    bound = math.sqrt(2.0)
    return SuiteResult("lipschitz", worst <= bound, trials, worst, bound)


def suite_responsibility_error(trials: int, seed: int, threads: int = 1) -> SuiteResult:
    """Perturbing every exponent by at most eps moves each responsibility by at most sqrt(2k) eps"""
    ks = (2, 8, 32)
    epsilons = (1e-3, 1e-2)

    def trial(t: int, rng: np.random.Generator) -> float:
        k = ks[t % len(ks)]
        eps = epsilons[(t // len(ks)) % len(epsilons)]
        x = rng.normal(0.0, 3.0, size=k)
        e = rng.uniform(-eps, eps, size=k)
        observed = float(np.max(np.abs(softmax(x + e) - softmax(x))))
        return observed / (math.sqrt(2.0 * k) * eps)

    ratios = run_trials(trial, trials, seed, threads)
    worst = max(ratios)
    return SuiteResult("responsibility-error", worst <= 1.0, trials, worst, 1.0,
                       {"k": list(ks), "eps": list(epsilons)})


def suite_tomography(trials: int, seed: int, threads: int = 1,
                     constant: float = TOMOGRAPHY_CONSTANT) -> SuiteResult:
    """l∞ and l2 tomography meet their precision in at least 99% of runs"""
    configs = [(mode, d, precision)
               for mode in ("linf", "l2") for d in (4, 16, 64) for precision in (0.05, 0.1)]
    details = {}
    worst_failure = 0.0
    for index, (mode, d, precision) in enumerate(configs):
        method = tomography_linf if mode == "linf" else tomography_l2

        def trial(t: int, rng: np.random.Generator) -> bool:
            x = rng.standard_normal(d)
            x /= np.linalg.norm(x)
            return method(x, precision, rng, constant).failed

        failures = run_trials(trial, trials, seed, threads, offset=index * trials)
        rate = float(np.mean(failures))
        worst_failure = max(worst_failure, rate)
        details[f"{mode}/d={d}/precision={precision}"] = {"failure_rate": rate}
    return SuiteResult("tomography", worst_failure <= 0.01, trials * len(configs), worst_failure, 0.01, details)


def suite_amplitude(trials: int, seed: int, runs: int = 15) -> SuiteResult:
    """
    Single draws land within the error bound with probability >= 8/π²; the median of
    `runs` draws does so in at least 99.9% of trials
    """
    details = {}
    passed = True
    worst_boost_failure = 0.0
    for index, (a, M) in enumerate((a, M) for a in (0.1, 0.5, 0.9) for M in (16, 64, 256)):
        rng = np.random.default_rng(seed ^ index)
        estimates, probs = amplitude_outcome_distribution(a, M)
        probs = probs / probs.sum()
        bound = amplitude_error_bound(a, M)

        single = estimates[rng.choice(M, size=trials, p=probs)]
        single_rate = float(np.mean(np.abs(single - a) <= bound))
        boosted = np.median(estimates[rng.choice(M, size=(trials, runs), p=probs)], axis=1)
        boost_rate = float(np.mean(np.abs(boosted - a) <= bound))

        exact_single = amplitude_success_probability(a, M)
        exact_majority = boosted_success_probability(exact_single, runs)
        slack = 3.0 * math.sqrt(AMPLITUDE_SUCCESS * (1 - AMPLITUDE_SUCCESS) / trials)
        ok = (exact_single >= AMPLITUDE_SUCCESS
              and single_rate >= AMPLITUDE_SUCCESS - slack
              and boost_rate >= 0.999)
        passed = passed and ok
        worst_boost_failure = max(worst_boost_failure, 1.0 - boost_rate)
        details[f"a={a}/M={M}"] = {
            "bound": bound,
            "single_rate": single_rate,
            "exact_single": exact_single,
            "boosted_rate": boost_rate,
            "exact_majority": exact_majority,
            "passed": ok,
        }
    return SuiteResult("amplitude", passed, trials * 9, worst_boost_failure, 0.001, details)


def suite_quadratic_form(trials: int, seed: int, threads: int = 1, runs: int = 15,
                         eps: float = 0.01, d: int = 8) -> SuiteResult:
    """Quadratic-form estimates stay within eps‖v‖² in at least 99% of runs"""
    def trial(t: int, rng: np.random.Generator) -> bool:
        sigma = Covariance(CovarianceType.FULL, _random_spd(d, 0.1, 1.0, rng))
        v = rng.standard_normal(d)
        return quadratic_form_estimate(v, sigma, t % 2 == 1, eps, rng, runs).failed

    failures = run_trials(trial, trials, seed, threads)
    rate = float(np.mean(failures))
    return SuiteResult("quadratic-form", rate <= 0.01, trials, rate, 0.01, {"eps": eps, "d": d})


def _noise_fixture(k: int, d: int, rng: np.random.Generator) -> GmmParams:
    theta = rng.dirichlet(np.full(k, 5.0))
    means = rng.standard_normal((k, d)) * 3.0
    covariances = [Covariance(CovarianceType.DIAGONAL, rng.uniform(0.5, 2.0, size=d)) for _ in range(k)]
    return GmmParams(theta, means, covariances, DIAGONAL)


def suite_noise_bounds(trials: int, seed: int, spec: NoiseSpec, eta: float = 10.0,
                       k: int = 16, d: int = 40, threads: int = 1) -> SuiteResult:
    """Every noise-channel output satisfies the approximate-model bounds"""
    params = _noise_fixture(k, d, np.random.default_rng(seed))

    def trial(t: int, rng: np.random.Generator) -> Dict[str, Any]:
        record: Dict[str, Any] = {}
        after = apply_noise(params, spec, eta, rng, record)
        return verify_bounds(params, after, spec, eta, record.get("raw_theta")).to_dict()

    reports = run_trials(trial, trials, seed, threads)

    def ratio(distance: Optional[float], bound: float) -> float:
        if distance is None:
            return 0.0
        if bound == 0:
            return 0.0 if distance == 0 else math.inf
        return distance / bound

    worst = 0.0
    for r in reports:
        theta_distance = r["raw_theta_distance"] if r["raw_theta_distance"] is not None else r["theta_distance"]
        worst = max(worst,
                    ratio(theta_distance, r["theta_bound"]),
                    ratio(r["max_mean_distance"], r["mean_bound"]),
                    ratio(r["max_covariance_distance"], r["covariance_bound"]))
    passed = all(r["passed"] for r in reports)
    details = {
        "noise": spec.to_dict(),
        "eta": eta,
        "k": k,
        "d": d,
        "max_theta_distance": max(r["raw_theta_distance"] or r["theta_distance"] for r in reports),
        "max_mean_distance": max(r["max_mean_distance"] for r in reports),
        "max_covariance_distance": max(r["max_covariance_distance"] for r in reports),
    }
    return SuiteResult("noise-bounds", passed, trials, worst, 1.0, details)


def suite_logdet(trials: int, seed: int, eps: float = 0.5, delta: float = 0.1, d: int = 50,
                 max_probes: int = 4096, threads: int = 1) -> SuiteResult:
    """Chebyshev log-det estimates land within eps of the exact value in at least 1 - delta of runs"""
    def trial(t: int, rng: np.random.Generator) -> float:
        sigma = _random_spd(d, 0.1, 0.9, rng)
        return abs(logdet_chebyshev(sigma, eps, delta, rng, max_probes) - logdet_exact(sigma))

    errors = run_trials(trial, trials, seed, threads)
    fixture = np.eye(d) * 0.5
    fixture_error = abs(logdet_chebyshev(fixture, eps, delta, np.random.default_rng(seed), max_probes)
                        - logdet_exact(fixture))
    success = float(np.mean(np.asarray(errors) <= eps))
    passed = success >= 1.0 - delta and fixture_error <= eps
    return SuiteResult("logdet", passed, trials, float(max(errors)), eps,
                       {"success_rate": success, "diagonal_fixture_error": fixture_error, "d": d})


def suite_error_claims(trials: int, seed: int) -> SuiteResult:
    report = compose_error_claims(trials, np.random.default_rng(seed))
    worst = max(report["angle"]["max_ratio"], report["norm_direction"]["max_ratio"])
    passed = report["angle"]["passed"] and report["norm_direction"]["passed"]
    return SuiteResult("error-claims", passed, trials, worst, 1.0, report)


def suite_kappa_stability(seed: int, increments: int = 10, synth: Optional[SyntheticSpec] = None) -> SuiteResult:
    """Appending same-mixture samples in equal chunks changes κ(V) by less than 10% per chunk"""
    synth = synth or SyntheticSpec(k=8, d=40, n=4000, separation=6.0, sigma=1.0, kind="diag")
    data, _, _ = sample_mixture(synth, np.random.default_rng(seed))
    history = kappa_stability(data, increments, start_rows=data.n // 2)
    worst = max(entry["relative_change"] for entry in history)
    return SuiteResult("kappa-stability", worst < 0.1, increments, worst, 0.1, {"history": history})


def run_suite(name: str, config: Dict[str, Any], threads: int = 1) -> SuiteResult:
    """
    Run a named validation suite

    Args:
        name: Suite name
        config: Full run configuration (validate, noise and profile sections are read)
        threads: Worker threads for per-trial fan-out

    Returns:
        SuiteResult
    """
    seed = int(config["seed"])
    options = config["validate"]
    trials = options.get("trials")
    runs = int(options.get("runs", 15))

    def pick(default: int) -> int:
        return int(trials) if trials is not None else default

    logger.info(f"Running validation suite '{name}'")
    if name == "lipschitz":
        result = suite_lipschitz(pick(10000), seed, threads)
    elif name == "responsibility-error":
        result = suite_responsibility_error(pick(10000), seed, threads)
    elif name == "tomography":
        result = suite_tomography(pick(1000), seed, threads, float(options.get("tomography_constant", 36.0)))
    elif name == "amplitude":
        result = suite_amplitude(pick(10000), seed, runs)
    elif name == "quadratic-form":
        result = suite_quadratic_form(pick(1000), seed, threads, runs)
    elif name == "noise-bounds":
        noise = dict(config["noise"])
        if noise.get("delta_theta") is None:
            noise["delta_theta"] = 0.038
        if noise.get("delta_mu") is None:
            noise["delta_mu"] = 0.5
        result = suite_noise_bounds(pick(1000), seed, NoiseSpec.from_dict(noise), threads=threads)
    elif name == "logdet":
        profile = config["profile"]
        result = suite_logdet(pick(20), seed, profile["logdet_eps"], profile["logdet_delta"],
                              max_probes=profile["max_probes"], threads=threads)
    elif name == "error-claims":
        result = suite_error_claims(pick(10000), seed)
    elif name == "kappa-stability":
        result = suite_kappa_stability(seed)
    else:
        raise ConfigError(f"unknown validation suite '{name}'")

    status = "PASS" if result.passed else "FAIL"
    logger.info(f"Suite '{name}': {status} (max observed {result.max_observed:.6g} vs bound {result.bound:.6g})")
    return result
