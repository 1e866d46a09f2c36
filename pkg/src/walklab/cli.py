"""Command-line experiment runner.

Every subcommand binds a graph, a marked set, and one quantity to a
seeded, reproducible CSV artifact.  The first line of every CSV is a
comment row echoing the full configuration and seed; floats are printed
with 17 significant digits.  Running the same configuration twice -- with
any --threads value -- produces byte-identical output.
"""

from __future__ import annotations

import argparse
import io
import math
import sys

import numpy as np

from . import chain as chain_mod
from ._parallel import thread_count
from .chain import MarkedSet, build_reversible, dump_chain, read_chain
from .errors import WalklabError
from .evolve import (
    build_walk_unitary,
    chebyshev_apply,
    fastforward_profile,
    q_t,
    sweep_q,
)
from .graphs import (
    StarSpec,
    TorusSpec,
    complete_graph_chain,
    lazy_cycle_chain,
    lemma2_marked_set,
    path_chain,
    segmented_star_chain,
    torus_chain,
)
from .interpolate import build_interpolated, interpolated_discriminant, r_to_s
from .spectra import (
    extended_hitting_time,
    hitting_time_exact,
    hitting_time_monte_carlo,
    torus_ht_plus_closed_form,
    torus_ht_plus_lower_bound,
)
from .trajectories import (
    corollary2_estimate,
    corollary3_check,
    geometric_sum_window,
    geometric_sum_window_empirical,
    lemma4_scan_exhaustive,
    lemma4_scan_random,
    simulate,
)

QUANTITIES = (
    "ht", "ht-plus", "ht-bound", "qsweep", "ff-success", "lemma3-check",
    "traj-sim", "lemma4-scan", "lemma5-grid", "cor2-estimate", "cor3-check",
    "example31", "example32", "gap-scan", "serialize",
)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


class CsvSink:
    """Accumulates one text artifact and writes it atomically at the end."""

    def __init__(self):
        self.buf = io.StringIO()

    def comment(self, text: str):
        self.buf.write(f"# {text}\n")

    def row(self, *values):
        self.buf.write(",".join(fmt(v) for v in values) + "\n")

    def raw(self, text: str):
        self.buf.write(text)

    def flush_to(self, out_path: str | None):
        text = self.buf.getvalue()
        if out_path:
            with open(out_path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def config_line(args, extra: dict | None = None) -> str:
    # threads is an execution detail, not an experiment parameter: identical
    # configs must produce byte-identical artifacts at any thread count
    pairs = {
        k: v for k, v in sorted(vars(args).items())
        if v is not None and k not in ("func", "out", "threads")
    }
    if extra:
        pairs.update(extra)
    return "config " + " ".join(f"{k}={fmt(v)}" for k, v in pairs.items())


# ---------------------------------------------------------------------------
# graph construction from flags
# ---------------------------------------------------------------------------

def add_graph_flags(p: argparse.ArgumentParser):
    p.add_argument("--torus", type=int, metavar="N",
                   help="N x N lazy torus walk")
    p.add_argument("--d1", type=int, help="dense-subgrid spacing")
    p.add_argument("--k1", type=int, help="dense-subgrid side count")
    p.add_argument("--d", type=int, help="sparse-subgrid spacing")
    p.add_argument("--star", type=int, metavar="K",
                   help="hub with K paths of length K^2")
    p.add_argument("--chain-file", help="load a serialized chain")
    p.add_argument("--mark", help="comma-separated marked vertex indices")


def add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_graph(args):
    """Returns (chain, marked_or_None, torus_spec_or_None)."""
    picks = [args.torus is not None, args.star is not None,
             args.chain_file is not None]
    if sum(picks) != 1:
        raise ValueError("exactly one of --torus, --star, --chain-file required")
    spec = None
    if args.torus is not None:
        chain = torus_chain(args.torus)
        marked = None
        grid_flags = [args.d1, args.k1, args.d]
        if any(v is not None for v in grid_flags):
            if any(v is None for v in grid_flags):
                raise ValueError("--d1, --k1, --d must be given together")
            spec = TorusSpec(side=args.torus, d1=args.d1, k1=args.k1, d=args.d)
            marked = lemma2_marked_set(spec, chain)
    elif args.star is not None:
        chain, marked = segmented_star_chain(StarSpec(args.star))
    else:
        chain, _ = read_chain(args.chain_file)
        marked = None
    if args.mark is not None:
        indices = [int(tok) for tok in args.mark.split(",") if tok.strip()]
        marked = MarkedSet.from_indices(indices, chain)
    return chain, marked, spec


def require_marked(marked) -> MarkedSet:
    if marked is None:
        raise ValueError("no marked set: give grid flags, --star, or --mark")
    return marked


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def cmd_serialize(args, sink: CsvSink):
    chain, _, _ = build_graph(args)
    dump_chain(chain, sink.buf)


def _report_row(sink, quantity: str, report):
    sink.row(quantity, report.value, report.error_bound, report.method,
             report.seed if report.seed is not None else "")


def cmd_ht(args, sink: CsvSink):
    chain, marked, _ = build_graph(args)
    marked = require_marked(marked)
    sink.comment(config_line(args))
    sink.row("quantity", "value", "error_bound", "method", "seed")
    if args.samples:
        rep = hitting_time_monte_carlo(chain, marked, args.samples, args.seed,
                                       threads=args.threads)
    else:
        rep = hitting_time_exact(chain, marked,
                                 conditional=not args.unconditional)
    _report_row(sink, "ht", rep)


def cmd_ht_plus(args, sink: CsvSink):
    chain, marked, spec = build_graph(args)
    sink.comment(config_line(args))
    sink.row("quantity", "value", "error_bound", "method", "seed")
    if args.closed_form or (spec is not None and chain.n > chain_mod.DENSE_LIMIT):
        if spec is None:
            raise ValueError("closed form needs the torus grid flags")
        value = torus_ht_plus_closed_form(spec, threads=args.threads)
        sink.row("ht_plus", value, 0.0, "torus-closed-form", "")
    else:
        rep = extended_hitting_time(chain, require_marked(marked))
        _report_row(sink, "ht_plus", rep)


def cmd_ht_bound(args, sink: CsvSink):
    _, _, spec = build_graph(args)
    if spec is None:
        raise ValueError("ht-bound needs the torus grid flags")
    sink.comment(config_line(args))
    sink.row("quantity", "value", "error_bound", "method", "seed")
    sink.row("ht_bound", torus_ht_plus_lower_bound(spec), 0.0,
             "torus-closed-form", "")


def _emit_sweep(sink: CsvSink, result):
    sink.row("r", "s", "q", "tau", "t_max")
    for i, r in enumerate(result.r_grid):
        sink.row(float(r), r_to_s(float(r)), float(result.q[i]),
                 int(result.tau[i]), result.t_max)
    sink.row("r1", result.r1, "", "", "")
    sink.row("r2", result.r2, "", "", "")


def cmd_qsweep(args, sink: CsvSink):
    chain, marked, _ = build_graph(args)
    marked = require_marked(marked)
    ht = args.ht
    if ht is None:
        if args.samples:
            ht = hitting_time_monte_carlo(chain, marked, args.samples,
                                          args.seed,
                                          threads=args.threads).value
        else:
            ht = hitting_time_exact(chain, marked).value
    result = sweep_q(chain, marked, t_max=args.t_max, ht=ht,
                     points_per_decade=args.r_per_decade,
                     threads=args.threads)
    sink.comment(config_line(args, {"ht_used": ht}))
    _emit_sweep(sink, result)


def cmd_ff_success(args, sink: CsvSink):
    chain, marked, _ = build_graph(args)
    marked = require_marked(marked)
    s = r_to_s(args.r) if args.r is not None else (args.s or 0.0)
    sink.comment(config_line(args, {"s_used": s}))
    sink.row("s", "t", "value")
    if args.t is not None:
        profile = fastforward_profile(chain, marked, s, args.t)
        sink.row(s, args.t, float(profile[args.t]))
    else:
        profile = fastforward_profile(chain, marked, s, args.t_max)
        for t, value in enumerate(profile):
            sink.row(s, t, float(value))


def _lemma3_cases():
    two_state = build_reversible(
        chain_mod.StochasticMatrix.from_dense([[0.7, 0.3], [0.1, 0.9]]))
    cases = [
        ("two-state", two_state, [1]),
        ("lazy-3-cycle", lazy_cycle_chain(3), [0]),
        ("torus-2", torus_chain(2), [0]),
        ("path-5", path_chain(5), [4]),
        ("complete-6", complete_graph_chain(6), [1, 3]),
        ("path-8", path_chain(8), [0, 7]),
    ]
    return cases


def cmd_lemma3_check(args, sink: CsvSink):
    sink.comment(config_line(args))
    sink.row("case", "n", "s", "t_max", "max_deviation", "pass")
    tol = 1e-8
    overall = True
    for name, chain, marked_idx in _lemma3_cases():
        marked = MarkedSet.from_indices(marked_idx, chain)
        for s in (0.0, 0.3, 0.9):
            worst = 0.0
            for completion in ("householder", "alternate"):
                walk = build_walk_unitary(chain, marked, s,
                                          completion=completion)
                d = interpolated_discriminant(
                    build_interpolated(chain, marked, s), dense=True)
                idx = walk.reference_projector_indices()
                power = np.eye(walk.dim)
                basis = np.eye(chain.n)
                for t in range(args.t_max + 1):
                    block = power[np.ix_(idx, idx)]
                    cheb = np.column_stack(
                        [chebyshev_apply(d, t, e) for e in basis])
                    worst = max(worst, float(np.max(np.abs(block - cheb))))
                    power = walk.matrix @ power
            ok = worst <= tol
            overall = overall and ok
            sink.row(name, chain.n, s, args.t_max, worst, ok)
    sink.row("ALL", "", "", "", "", overall)
    if not overall:
        raise WalklabError("walk-operator block identity check failed")


def cmd_traj_sim(args, sink: CsvSink):
    chain, marked, _ = build_graph(args)
    record = simulate(chain.matrix, chain.pi, args.steps, args.seed)
    sink.comment(config_line(args))
    sink.row("seed", "step", "vertex", "marked")
    mask = marked.mask(chain.n) if marked is not None else np.zeros(
        chain.n, dtype=bool)
    for step, vertex in enumerate(record.vertices):
        sink.row(args.seed, step, int(vertex), bool(mask[vertex]))


def cmd_lemma4_scan(args, sink: CsvSink):
    sink.comment(config_line(args))
    sink.row("T", "mode", "total", "checked", "skipped", "violations",
             "first_violation", "seed")
    if args.exhaustive:
        rep = lemma4_scan_exhaustive(args.T, threads=args.threads)
        mode = "exhaustive"
    else:
        rep = lemma4_scan_random(args.T, args.samples, args.seed,
                                 threads=args.threads)
        mode = "random"
    sink.row(rep.T, mode, rep.total, rep.checked, rep.skipped,
             rep.violations,
             rep.first_violation if rep.first_violation is not None else "",
             rep.seed if rep.seed is not None else "")
    if rep.violations:
        raise WalklabError(f"{rep.violations} rescaling-window violations")


def cmd_lemma5_grid(args, sink: CsvSink):
    sink.comment(config_line(args))
    sink.row("t", "p", "exact_prob", "empirical_prob", "n_samples")
    p_grid = np.linspace(0.01, 1.0, args.p_points)
    for t in range(1, args.t_values + 1):
        for i, p in enumerate(p_grid):
            exact = geometric_sum_window(float(p), t)
            emp, _ = geometric_sum_window_empirical(
                float(p), t, args.samples,
                seed=args.seed + 1000 * t + i)
            sink.row(t, float(p), exact, emp, args.samples)


def cmd_cor2_estimate(args, sink: CsvSink):
    chain, marked, _ = build_graph(args)
    marked = require_marked(marked)
    ht = hitting_time_exact(chain, marked).value
    T = math.ceil(args.t_multiplier * ht)
    est = corollary2_estimate(chain.matrix, marked, chain.pi, T,
                              args.samples, args.seed, threads=args.threads)
    sink.comment(config_line(args, {"ht_used": ht, "T": T}))
    sink.row("estimate", "half_width", "prob_event", "n_event", "samples",
             "T", "seed")
    sink.row(est.estimate, est.half_width, est.prob_event, est.n_event,
             est.samples, est.T, est.seed)


def cmd_cor3_check(args, sink: CsvSink):
    chain, marked, _ = build_graph(args)
    marked = require_marked(marked)
    ht = hitting_time_exact(chain, marked).value
    T = math.ceil(args.t_multiplier * ht)
    rep = corollary3_check(chain, marked, T)
    sink.comment(config_line(args, {"T": T}))
    sink.row("mean", "floor", "best_term", "holds", "T", "ht")
    sink.row(rep.mean, rep.floor, rep.best_term, rep.holds, rep.T, rep.ht)


PRESET_HEADER = ("record", "quantity", "value", "error_bound", "method",
                 "r", "s", "q", "tau", "t_max", "seed")


def _preset_scalar(sink, quantity, value, error_bound, method, seed=""):
    sink.row("quantity", quantity, value, error_bound, method,
             "", "", "", "", "", seed)


def _preset_sweep(sink, result):
    for i, r in enumerate(result.r_grid):
        sink.row("sweep", "", "", "", "", float(r), r_to_s(float(r)),
                 float(result.q[i]), int(result.tau[i]), result.t_max, "")
    sink.row("marker", "r1", result.r1, "", "", "", "", "", "", "", "")
    sink.row("marker", "r2", result.r2, "", "", "", "", "", "", "", "")


def cmd_example31(args, sink: CsvSink):
    """Full parameter set of the structured-torus experiment.

    Emits the Monte Carlo hitting time, the closed-form extended hitting
    time with its single-mode lower bound, the operating-point success
    bound q at (r = 96.61, t = 21) for the full scale, and sweep rows for
    the success-bound figure.  --r-per-decade 0 skips the sweep.
    """
    spec = TorusSpec.from_scale(args.scale)
    chain = torus_chain(spec.side)
    marked = lemma2_marked_set(spec, chain)
    sink.comment(config_line(args, {"N": spec.side, "marked": marked.size}))
    sink.row(*PRESET_HEADER)
    mc = hitting_time_monte_carlo(chain, marked, args.samples, args.seed,
                                  threads=args.threads)
    _preset_scalar(sink, "ht", mc.value, mc.error_bound, mc.method, mc.seed)
    cf = torus_ht_plus_closed_form(spec, threads=args.threads)
    _preset_scalar(sink, "ht_plus", cf, 0.0, "torus-closed-form")
    _preset_scalar(sink, "ht_bound", torus_ht_plus_lower_bound(spec), 0.0,
                   "torus-closed-form")
    if args.scale == 3:
        value = q_t(chain, marked, r_to_s(96.61), 21)
        sink.row("quantity", "q_check", value, "", "chebyshev",
                 96.61, r_to_s(96.61), value, 21, 21, "")
    if args.r_per_decade > 0:
        result = sweep_q(chain, marked, ht=mc.value,
                         points_per_decade=args.r_per_decade,
                         threads=args.threads)
        _preset_sweep(sink, result)


def cmd_example32(args, sink: CsvSink):
    """Full parameter set of the segmented-star experiment (hub plus k
    paths of length k^2, one path marked)."""
    chain, marked = segmented_star_chain(StarSpec(args.k))
    sink.comment(config_line(args, {"n": chain.n, "marked": marked.size}))
    sink.row(*PRESET_HEADER)
    ht = hitting_time_exact(chain, marked)
    _preset_scalar(sink, "ht", ht.value, ht.error_bound, ht.method)
    htp = extended_hitting_time(chain, marked)
    _preset_scalar(sink, "ht_plus", htp.value, htp.error_bound, htp.method)
    result = sweep_q(chain, marked, ht=ht.value,
                     points_per_decade=args.r_per_decade,
                     threads=args.threads)
    best_r, best_q, best_tau = result.best()
    sink.row("quantity", "q_best", best_q, "", "chebyshev", best_r,
             r_to_s(best_r), best_q, best_tau, result.t_max, "")
    _preset_sweep(sink, result)


def cmd_gap_scan(args, sink: CsvSink):
    """Hitting-time vs extended-hitting-time gap across the scale family."""
    sink.comment(config_line(args))
    sink.row("a", "N", "marked", "ht", "ht_method", "ht_error", "ht_plus",
             "ratio", "seed")
    rows = []
    for a in (2, 3):
        spec = TorusSpec.from_scale(a)
        chain = torus_chain(spec.side)
        marked = lemma2_marked_set(spec, chain)
        if chain.n <= chain_mod.DENSE_LIMIT:
            ht = hitting_time_exact(chain, marked)
        else:
            ht = hitting_time_monte_carlo(chain, marked, args.samples,
                                          args.seed, threads=args.threads)
        cf = torus_ht_plus_closed_form(spec, threads=args.threads)
        rows.append((a, spec.side, marked.size, ht.value, ht.method,
                     ht.error_bound, cf, cf / ht.value,
                     ht.seed if ht.seed is not None else ""))
        sink.row(*rows[-1])
    if rows[1][7] <= rows[0][7]:
        raise WalklabError("extended/classical gap failed to grow with scale")


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="walklab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def new(name, func, graph=True, **kwargs):
        p = sub.add_parser(name, **kwargs)
        if graph:
            add_graph_flags(p)
        add_common_flags(p)
        p.set_defaults(func=func)
        return p

    p = new("ht", cmd_ht, help="classical hitting time")
    p.add_argument("--samples", type=int, default=0,
                   help="use Monte Carlo with this many samples")
    p.add_argument("--unconditional", action="store_true",
                   help="weight marked starts by zero instead of conditioning")

    p = new("ht-plus", cmd_ht_plus, help="extended hitting time")
    p.add_argument("--closed-form", action="store_true",
                   help="force the torus character-sum route")

    new("ht-bound", cmd_ht_bound, help="single-mode lower bound (torus)")

    p = new("qsweep", cmd_qsweep, help="success-bound sweep over stay factors")
    p.add_argument("--t-max", type=int, default=None)
    p.add_argument("--r-per-decade", type=int, default=64)
    p.add_argument("--ht", type=float, default=None,
                   help="reuse a known hitting time")
    p.add_argument("--samples", type=int, default=0,
                   help="estimate the grid-defining hitting time by Monte Carlo")

    p = new("ff-success", cmd_ff_success,
            help="fast-forwarding success probability")
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--t", type=int, default=None)
    p.add_argument("--t-max", type=int, default=50)

    p = new("lemma3-check", cmd_lemma3_check, graph=False,
            help="walk-operator Chebyshev block identity check")
    p.add_argument("--t-max", type=int, default=10)

    p = new("traj-sim", cmd_traj_sim, help="simulate one seeded trajectory")
    p.add_argument("--steps", type=int, default=100)

    p = new("lemma4-scan", cmd_lemma4_scan, graph=False,
            help="rescaling-window counterexample search")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--samples", type=int, default=10**6)

    p = new("lemma5-grid", cmd_lemma5_grid, graph=False,
            help="geometric-sum concentration grid")
    p.add_argument("--t-values", type=int, default=7)
    p.add_argument("--p-points", type=int, default=100)
    p.add_argument("--samples", type=int, default=10**5)

    p = new("cor2-estimate", cmd_cor2_estimate,
            help="conditional stretched-walk event estimate")
    p.add_argument("--t-multiplier", type=float, default=3.0)
    p.add_argument("--samples", type=int, default=20000)

    p = new("cor3-check", cmd_cor3_check,
            help="exact mean fast-forwarding success vs floor")
    p.add_argument("--t-multiplier", type=float, default=3.0)

    p = new("example31", cmd_example31, graph=False,
            help="structured-torus preset (scales 2 and 3)")
    p.add_argument("--scale", type=int, default=3, choices=(2, 3))
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--r-per-decade", type=int, default=8)

    p = new("example32", cmd_example32, graph=False,
            help="segmented-star preset")
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--r-per-decade", type=int, default=64)

    p = new("gap-scan", cmd_gap_scan, graph=False,
            help="extended vs classical hitting-time gap across scales")
    p.add_argument("--samples", type=int, default=10**5)

    new("serialize", cmd_serialize, help="emit the chain serialization")

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)
    if argv and argv[0] == "run":
        # `run --quantity NAME ...` is an alias for the NAME subcommand
        try:
            at = argv.index("--quantity")
            quantity = argv[at + 1]
        except (ValueError, IndexError):
            sys.stderr.write("run requires --quantity <name>\n")
            return 2
        if quantity not in QUANTITIES:
            sys.stderr.write(f"unknown quantity {quantity!r}; "
                             f"choose from {', '.join(QUANTITIES)}\n")
            return 2
        argv = [quantity] + argv[1:at] + argv[at + 2:]
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        args.threads = thread_count(args.threads)
    sink = CsvSink()
    try:
        args.func(args, sink)
    except (WalklabError, ValueError, OSError) as exc:
        sink.row("error", type(exc).__name__, str(exc))
        sink.flush_to(args.out)
        return 1
    sink.flush_to(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
