"""Command-line harness: seeded experiments, the exact DP, and lemma checks.

Every command is a pure function of (config, seed): reruns produce
byte-identical output.  CSV files open with versioned ``#`` comment lines
recording the schema and the exact parameters; verification reports are JSON.
Exit codes: 0 success, 1 a verification check failed, 2 usage error.
"""

from __future__ import annotations

import json
import math
import os
import sys
import tempfile
from pathlib import Path

import click
import numpy as np

from . import lowerbound, prob
from . import simulate as sim
from .core import Instance, bernoulli_instance, load_instance, sample_realization, stream

SCHEMA = "adaptsched-csv v1"
DEFAULT_VERIFY_SEED = 20260811  # part of the default verification grid
POLICIES = ("list-scheduling", "lept-fix", "lept-delta-alpha", "balancing")
PRESETS = ("growth", "squaring", "policy-compare", "xi-trajectory")
SUITES = ("dominance", "balancing", "load-lemma", "scaling", "lambda")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_rows(out: str | None, comments: list[str], header: list[str], rows) -> None:
    """Atomic CSV emission: the file appears complete or not at all."""
    lines = [f"# {SCHEMA}"]
    lines += [f"# {c}" for c in comments]
    lines.append(",".join(header))
    lines += [",".join(_fmt(x) for x in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out is None:
        click.echo(text, nl=False)
        return
    path = Path(out)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(out: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config {path}: {exc}")


def _pick(cli_value, config: dict, key: str, default):
    """Precedence: command line > config file > default."""
    if cli_value is not None:
        return cli_value
    if key in config:
        return config[key]
    return default


def _resolve_seed(seed: str | None, config: dict) -> int:
    seed = _pick(seed, config, "seed", None)
    if seed is None:
        raise click.UsageError("a seed is required; pass --seed <u64> or --seed auto")
    if isinstance(seed, str) and seed.lower() == "auto":
        return int(np.random.SeedSequence().entropy % (2**63))
    try:
        return int(seed)
    except (TypeError, ValueError):
        raise click.UsageError(f"seed must be an unsigned integer or 'auto', got {seed!r}")


def _resolve_instance(config: dict, instance: str | None, N: int | None, m: int | None) -> tuple[Instance, str]:
    instance = _pick(instance, config, "instance", None)
    N = _pick(N, config, "N", None)
    m = _pick(m, config, "m", None)
    if instance is not None:
        try:
            return load_instance(instance), f"instance={instance}"
        except (OSError, ValueError, KeyError) as exc:
            raise click.UsageError(f"cannot load instance {instance}: {exc}")
    if N is not None and m is not None:
        return bernoulli_instance(int(N), int(m)), f"bernoulli N={N} m={m}"
    raise click.UsageError("give --instance FILE or both --N and --m")


def _make_policy(name: str, inst: Instance, delta: float | None, alpha: float, kappa: float):
    """Returns (policy, mode, mode kwargs) with the policy's natural run mode."""
    if name == "list-scheduling":
        return sim.ListSchedulingPolicy(), "any", {}
    if name == "lept-fix":
        return sim.LeptFixPolicy(), "fixed", {}
    if name == "lept-delta-alpha":
        if delta is None:
            delta = kappa * sim.compute_T(inst) / 2.0  # stand-in for kappa * OPT
        pol = sim.LeptDeltaAlphaPolicy(delta, alpha)
        return pol, "delta", {"delta": delta}
    if name == "balancing":
        return sim.BalancingPolicy(), "shift", {"tau": 1.0}
    raise click.UsageError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")


@click.group()
def main():
    """Stochastic makespan scheduling lab with restricted adaptivity."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON config; CLI flags override it.")
@click.option("--seed", default=None, help="Master seed (u64) or 'auto'.")
@click.option("--trials", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="Output CSV (stdout if omitted).")
@click.option("--policy", "policy_name", default=None, type=click.Choice(POLICIES))
@click.option("--mode", default=None, type=click.Choice(sim.MODES), help="Override the policy's natural mode.")
@click.option("--delta", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--kappa", type=float, default=None, help="delta defaults to kappa*T/2 for lept-delta-alpha.")
@click.option("--tau", type=float, default=None)
@click.option("--N", "n_param", type=int, default=None)
@click.option("--m", "m_param", type=int, default=None)
@click.option("--instance", type=click.Path(), default=None, help="Instance JSON file.")
@click.option("--trace-out", type=click.Path(), default=None,
              help="Also export the first trial's schedule as CSV (job, machine, start, completion).")
def simulate(config_path, seed, trials, out, policy_name, mode, delta, alpha, kappa, tau, n_param, m_param, instance, trace_out):
    """Monte Carlo makespans of one policy on one instance."""
    config = _load_config(config_path)
    seed = _resolve_seed(seed, config)
    trials = int(_pick(trials, config, "trials", 1000))
    if trials < 1:
        raise click.UsageError("trials must be >= 1")
    out = _pick(out, config, "out", None)
    policy_name = _pick(policy_name, config, "policy", "list-scheduling")
    alpha = float(_pick(alpha, config, "alpha", 33.0))
    kappa = float(_pick(kappa, config, "kappa", 1.0))
    delta = _pick(delta, config, "delta", None)
    tau = _pick(tau, config, "tau", None)
    inst, inst_desc = _resolve_instance(config, instance, n_param, m_param)

    policy, natural_mode, mode_kwargs = _make_policy(policy_name, inst, delta, alpha, kappa)
    mode = _pick(mode, config, "mode", natural_mode)
    if mode == "delta" and "delta" not in mode_kwargs:
        mode_kwargs["delta"] = delta if delta is not None else kappa * sim.compute_T(inst) / 2.0
    if mode == "shift" and "tau" not in mode_kwargs:
        mode_kwargs["tau"] = tau if tau is not None else 1.0

    mks = np.empty(trials)
    for trial in range(trials):
        real = sample_realization(inst, stream(seed, trial))
        tr = sim.run_policy(inst, real, policy, mode, record_events=False, **mode_kwargs)
        mks[trial] = tr.makespan()
        if trial == 0 and trace_out is not None:
            from .core import trace_to_csv

            trace_to_csv(tr, trace_out)
    mean = float(mks.mean())
    hw = 1.96 * float(mks.std(ddof=1)) / math.sqrt(trials) if trials > 1 else 0.0

    rows = [["trial", t, _fmt(float(v)), "", "", "", ""] for t, v in enumerate(mks)]
    rows.append(["summary", "", "", _fmt(mean), _fmt(hw), _fmt(float(mks.min())), _fmt(float(mks.max()))])
    _write_rows(
        out,
        [f"simulate seed={seed} trials={trials} policy={policy_name} mode={mode} {inst_desc}"],
        ["record", "trial", "makespan", "mean", "ci_half_width", "min", "max"],
        rows,
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--N", "n_param", type=int, default=None, required=False)
@click.option("--m", "m_param", type=int, default=None, required=False)
@click.option("--r-max", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--json-out", type=click.Path(), default=None, help="Also dump the table as JSON.")
def dp(config_path, n_param, m_param, r_max, out, json_out):
    """Exact cost-to-go table J(r) for the Bernoulli instance dynamics."""
    config = _load_config(config_path)
    N = _pick(n_param, config, "N", None)
    m = _pick(m_param, config, "m", None)
    r_max = _pick(r_max, config, "r_max", None)
    if N is None or m is None or r_max is None:
        raise click.UsageError("dp requires --N, --m and --r-max")
    N, m, r_max = int(N), int(m), int(r_max)
    if r_max > 4000:
        raise click.UsageError("r-max beyond 4000 is not supported by the exact DP; sample instead")
    table = lowerbound.bellman_opt1(N, m, r_max)
    rows = [[r, _fmt(table[r])] for r in range(r_max + 1)]
    _write_rows(out, [f"dp N={N} m={m} r_max={r_max}"], ["r", "cost_to_go"], rows)
    if json_out:
        _write_json(json_out, {"N": N, "m": m, "values": list(table.values)})


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------

def _suite_dominance(seed: int) -> dict:
    failures = []
    checks = 0
    for q in (0.1, 0.3, 0.5, 0.7, 0.9):
        for k2 in range(2, 13):
            for k1 in range(1, k2):
                checks += 1
                if not lowerbound.dominance_clip_lemma_check(q, k1, k2):
                    failures.append({"q": q, "k1": k1, "k2": k2, "check": "lemma"})
                if not lowerbound.dominance_clip_corollary_check(q, k1, k2):
                    failures.append({"q": q, "k1": k1, "k2": k2, "check": "corollary"})
                for a in range(0, k1 + k2 + 1):
                    got = lowerbound.clip_lemma_case_probs(q, k1, k2, a)
                    want = lowerbound.clip_lemma_case_probs_enumerated(q, k1, k2, a)
                    if any(abs(g - w) > 1e-12 for g, w in zip(got, want)):
                        failures.append(
                            {"q": q, "k1": k1, "k2": k2, "a": a, "check": "closed-form",
                             "got": list(got), "want": list(want)}
                        )
    return {"suite": "dominance", "num_checks": checks, "failures": failures, "passed": not failures}


def _suite_balancing(seed: int) -> dict:
    failures = []
    checks = 0
    for N in range(1, 7):
        for m in range(1, 4):
            table = lowerbound.bellman_opt1(N, m, 9)
            for r in range(10):
                checks += 1
                brute = lowerbound.brute_force_opt1(N, m, r)
                if abs(brute - table[r]) > 1e-12:
                    failures.append({"N": N, "m": m, "r": r, "bellman": table[r], "brute": brute})
    return {"suite": "balancing", "num_checks": checks, "failures": failures, "passed": not failures}


def random_instance(gen: np.random.Generator, max_n: int = 200, max_m: int = 20) -> Instance:
    """Random finite-support instance for structural checks."""
    from .core import Dist

    n = int(gen.integers(1, max_n + 1))
    m = int(gen.integers(1, max_m + 1))
    jobs = []
    for _ in range(n):
        k = int(gen.integers(1, 5))
        vals = np.sort(gen.random(k) * 10.0)
        vals = np.unique(vals)
        probs = gen.random(len(vals)) + 0.05
        probs = probs / probs.sum()
        jobs.append(Dist(tuple(vals), tuple(probs)))
    return Instance(m, tuple(jobs))


def lept_load_bounds_ok(inst: Instance, tol: float = 1e-9) -> bool:
    """Every machine's expected load sits in [l, n_i/(n_i-1) * l] (single-job machines exempt)."""
    queues = sim.lept_fix_assignment(inst)
    exps = inst.expectations()
    loads = [float(sum(exps[j] for j in q)) for q in queues]
    low = min(loads)
    for q, load in zip(queues, loads):
        if load < low - tol:
            return False
        if len(q) >= 2 and load > len(q) / (len(q) - 1) * low + tol:
            return False
        if len(q) >= 2 and load > 2.0 * low + tol:  # two-type partition bound
            return False
    return True


def _suite_load_lemma(seed: int) -> dict:
    failures = []
    gen = stream(seed, 0)
    trials = 1000
    for t in range(trials):
        inst = random_instance(gen)
        if not lept_load_bounds_ok(inst):
            failures.append({"trial": t, "n": inst.n, "m": inst.m})
    return {"suite": "load-lemma", "num_checks": trials, "failures": failures, "passed": not failures}


def _suite_scaling(seed: int) -> dict:
    failures = []
    checks = 0
    for delta in (0.5, 0.25):
        rep = lowerbound.delta_scaling_check(4, 2, delta, 1000, seed)
        checks += len(rep.trials)
        failures += [
            {"delta": delta, "trial": t.trial, "m_delta": t.makespan_delta, "m_one": t.makespan_one}
            for t in rep.trials
            if not t.identity_ok
        ]
    return {"suite": "scaling", "num_checks": checks, "failures": failures, "passed": not failures}


def _suite_lambda(seed: int) -> dict:
    failures = []
    # the starting fraction is 1 almost surely
    sim0 = lowerbound.simulate_lambda(4, 3, 0, 200, seed)
    if not np.all(sim0.lambdas[:, 0] == 1.0):
        failures.append({"check": "lambda0"})
    # one-round empirical histogram against the exact remaining-count law
    N, m, trials = 4, 3, 100_000
    sim1 = lowerbound.simulate_lambda(N, m, 1, trials, seed + 1)
    counts = np.round(sim1.lambdas[:, 1] * N * m).astype(int)
    exact = lowerbound.remaining_after_round(lowerbound.balanced_assignment(N * m, m), N).as_array()
    for s, p_exact in enumerate(exact):
        emp = float((counts == s).mean())
        slack = 6.0 * math.sqrt(max(p_exact * (1 - p_exact), 1e-12) / trials) + 2.0 / trials
        if abs(emp - p_exact) > slack:
            failures.append({"check": "one-round-pmf", "s": s, "emp": emp, "exact": p_exact})
    # quadratic-decay tail bound at the simulated-dynamics scale
    mq, Nq, tq = 10_000, 100, 2
    simq = lowerbound.simulate_lambda(Nq, mq, tq, 400, seed + 2)
    for t in (1, 2):
        bound = (1.0 - math.exp(-2.0 * math.sqrt(mq))) ** t
        emp = simq.tail_frequency(t, (2 * math.e) ** (1 - 2**t))
        se = math.sqrt(max(emp * (1 - emp), 0.0) / 400)
        if emp < bound - 3 * se:
            failures.append({"check": "quadratic-tail", "t": t, "emp": emp, "bound": bound})
    checks = 2 + len(exact) + 2
    return {"suite": "lambda", "num_checks": checks, "failures": failures, "passed": not failures}


_SUITE_FUNCS = {
    "dominance": _suite_dominance,
    "balancing": _suite_balancing,
    "load-lemma": _suite_load_lemma,
    "scaling": _suite_scaling,
    "lambda": _suite_lambda,
}


@main.command()
@click.argument("suite", type=click.Choice(SUITES + ("all",)))
@click.option("--seed", default=None, help=f"Grid seed (default {DEFAULT_VERIFY_SEED}).")
@click.option("--out", type=click.Path(), default=None, help="JSON report path (stdout if omitted).")
def verify(suite, seed, out):
    """Run one named invariant suite over its default grid; exit 0 iff it passes."""
    seed = int(seed) if seed is not None and str(seed).lower() != "auto" else DEFAULT_VERIFY_SEED
    names = list(SUITES) if suite == "all" else [suite]
    reports = [_SUITE_FUNCS[name](seed) for name in names]
    passed = all(r["passed"] for r in reports)
    payload = {"seed": seed, "passed": passed, "suites": reports}
    _write_json(out, payload)
    for r in reports:
        click.echo(f"{r['suite']}: {'pass' if r['passed'] else 'FAIL'} ({r['num_checks']} checks)", err=True)
    if not passed:
        sys.exit(1)


# ---------------------------------------------------------------------------
# Experiment presets
# ---------------------------------------------------------------------------

def growth_rows(seed: int, trials: int) -> list[list]:
    rows = []
    for i, m in enumerate((4, 16, 64, 256, 1024)):
        N = math.isqrt(m)
        N = N if N * N == m else N + 1
        mean, hw = lowerbound.estimate_opt1(N, m, trials, seed + i)
        rows.append([m, N, trials, mean, hw, math.log(math.log(m))])
    return rows


def squaring_rows(seed: int, trials: int, N: int = 10_000, m: int = 1_000) -> list[list]:
    rows = []
    for i, lam in enumerate((1.0, 0.5, 0.25)):
        s = lowerbound.simulate_lambda(N, m, 1, trials, seed + i, lambda0=lam)
        nxt = s.lambdas[:, 1]
        emp = float(nxt.mean())
        se = float(nxt.std(ddof=1)) / math.sqrt(trials)
        analytic = lam + math.exp(-lam) - 1.0
        rows.append([lam, emp, se, lam * lam / math.e, analytic, lam * lam / 2.0])
    return rows


def policy_compare_rows(seed: int, trials: int) -> list[list]:
    rows = []
    for i, m in enumerate((64, 256)):
        N = math.isqrt(m)
        inst = bernoulli_instance(N, m)
        T = sim.compute_T(inst)
        fix_mean, fix_hw = sim.estimate_expected_makespan(
            inst, sim.LeptFixPolicy(), "fixed", trials, seed + 10 * i
        )
        pol = sim.LeptDeltaAlphaPolicy(delta=T)
        ad_mean, ad_hw = sim.estimate_expected_makespan(
            inst, pol, "delta", trials, seed + 10 * i, delta=T
        )
        ls = np.empty(trials)
        for trial in range(trials):
            real = sample_realization(inst, stream(seed + 10 * i, trial))
            ls[trial] = sim.list_scheduling_makespan(inst, real)
        ls_mean = float(ls.mean())
        ls_hw = 1.96 * float(ls.std(ddof=1)) / math.sqrt(trials)
        rows.append([m, N, "lept-fix", trials, fix_mean, fix_hw])
        rows.append([m, N, "lept-delta-alpha", trials, ad_mean, ad_hw])
        rows.append([m, N, "list-scheduling", trials, ls_mean, ls_hw])
    return rows


def xi_trajectory_rows(seed: int, trials: int, m: int = 64, alpha: float = 33.0) -> list[list]:
    N = math.isqrt(m)
    inst = bernoulli_instance(N, m)
    T = sim.compute_T(inst)
    pol = sim.LeptDeltaAlphaPolicy(delta=T, alpha=alpha)
    xs, as_ = [], []
    for trial in range(trials):
        real = sample_realization(inst, stream(seed, trial))
        tr = sim.run_policy(inst, real, pol, "delta", delta=T)
        cm = sim.checkpoint_metrics(tr, inst, T, alpha)
        xs.append(cm.xi)
        as_.append(cm.a)
    xi_mean = np.mean(np.asarray(xs), axis=0)
    a_mean = np.mean(np.asarray(as_), axis=0)
    consts = prob.analysis_constants(alpha, m)
    rows = []
    for k in range(len(xi_mean)):
        gamma = consts.gamma[k - 1] if 1 <= k <= len(consts.gamma) else ""
        beta = consts.beta[k - 2] if 2 <= k <= len(consts.beta) + 1 else ""
        rows.append([k, float(xi_mean[k]), float(a_mean[k]), gamma, beta])
    return rows


@main.command()
@click.argument("preset", type=click.Choice(PRESETS))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", default=None, help="Master seed (u64) or 'auto'.")
@click.option("--trials", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--plot", is_flag=True, help="Render a matplotlib figure next to the CSV.")
def experiment(preset, config_path, seed, trials, out, plot):
    """Run a named experiment preset and emit its CSV (optionally a figure)."""
    config = _load_config(config_path)
    seed = _resolve_seed(seed, config)
    out = _pick(out, config, "out", None)
    trials = _pick(trials, config, "trials", None)
    if trials is not None and (trials < 1 or trials > 200_000):
        raise click.UsageError("trials must be in 1..200000")
    if plot and out is None:
        raise click.UsageError("--plot requires --out so the figure has a place to live")

    if preset == "growth":
        trials = int(trials or 4000)
        header = ["m", "N", "trials", "opt1_mean", "ci_half_width", "loglog_m"]
        rows = growth_rows(seed, trials)
    elif preset == "squaring":
        trials = int(trials or 10_000)
        header = ["lam", "empirical_next_mean", "std_err", "lam_sq_over_e", "analytic_limit", "lam_sq_over_2"]
        rows = squaring_rows(seed, trials)
    elif preset == "policy-compare":
        trials = int(trials or 300)
        header = ["m", "N", "policy", "trials", "mean_makespan", "ci_half_width"]
        rows = policy_compare_rows(seed, trials)
    else:
        trials = int(trials or 200)
        header = ["k", "mean_xi", "mean_a", "gamma", "beta"]
        rows = xi_trajectory_rows(seed, trials)

    _write_rows(out, [f"experiment preset={preset} seed={seed} trials={trials}"], header, rows)
    if plot:
        from . import report

        fig_path = str(Path(out).with_suffix(".png"))
        report.render(preset, header, rows, fig_path)
        click.echo(f"figure written to {fig_path}", err=True)


if __name__ == "__main__":
    main()
