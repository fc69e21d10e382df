"""Command-line surface: generate, train, eval, query, serve.

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
(``#`` comments allowed); explicit flags win over config values, config
values win over built-in defaults, and unknown keys are rejected. The
fully-resolved configuration is logged to standard error on every run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
Diagnostics go to standard error as single lines; artifacts are written
atomically (temp file + rename) and inputs are never modified.

The ``COOC_ATLAS_THREADS`` environment variable caps the numerical
libraries' thread pools; it is applied before numpy is first imported,
which is why all heavy imports in this module are deferred into the
subcommand handlers.

The ``query`` subcommand writes a self-describing text file: ``key = value``
header lines, a ``[ranking]`` section (``rank<TAB>item<TAB>score``), and a
``[heatmap]`` section of tab-separated row-major raster lines.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Callable, Mapping

from .errors import DataError, NumericalError

LOG = logging.getLogger("cooc_atlas.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

HELP_WIDTH = 78  # keeps --help output independent of the terminal


class UsageError(Exception):
    """Bad invocation: unknown flags or config keys, unparsable values."""


def _formatter(prog: str) -> argparse.HelpFormatter:
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=HELP_WIDTH)


# ---------------------------------------------------------------------------
# Config files


def load_config(path: str) -> dict[str, str]:
    """Parse a ``key = value`` file; later duplicates win."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, _, value = line.partition("=")
                out[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    return out


def _apply_config(parser: argparse.ArgumentParser, keys: Mapping[str, str], argv: list[str]) -> None:
    """Install config values as parser defaults so explicit flags still win."""
    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--config")
    known, _ = scan.parse_known_args(argv)
    if not known.config:
        return
    values = load_config(known.config)
    unknown = sorted(set(values) - set(keys))
    if unknown:
        raise UsageError(
            f"unknown config key(s) {', '.join(map(repr, unknown))} in {known.config}; "
            f"known keys: {', '.join(sorted(keys))}"
        )
    parser.set_defaults(**{keys[k]: v for k, v in values.items()})


def _log_resolved(subcommand: str, args: argparse.Namespace) -> None:
    skip = {"handler", "config_keys", "explicit_dests", "config_dests"}
    pairs = " ".join(
        f"{k}={v!r}" for k, v in sorted(vars(args).items()) if k not in skip
    )
    LOG.info("resolved config [%s]: %s", subcommand, pairs)


# ---------------------------------------------------------------------------
# Value parsing (config values arrive as strings, flags as typed values)


def _as_int(name: str, value) -> int:
    try:
        return int(str(value))
    except ValueError:
        raise UsageError(f"{name} must be an integer, got {value!r}") from None


def _as_float(name: str, value) -> float:
    try:
        return float(str(value))
    except ValueError:
        raise UsageError(f"{name} must be a number, got {value!r}") from None


def _as_choice(name: str, value, choices: tuple[str, ...]) -> str:
    value = str(value)
    if value not in choices:
        raise UsageError(f"{name} must be one of {', '.join(choices)}; got {value!r}")
    return value


def _as_dims(name: str, value) -> tuple[int, ...]:
    parts = [p.strip() for p in str(value).split(",") if p.strip()]
    if not parts:
        raise UsageError(f"{name} must be a comma-separated list of integers, got {value!r}")
    return tuple(_as_int(name, p) for p in parts)


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Shared training-parameter plumbing

# config key -> argparse dest, shared by train and eval
TRAIN_KEYS = {
    "order": "order",
    "dims": "dims",
    "lambda": "lam",
    "reg": "reg",
    "alpha": "alpha",
    "beta": "beta",
    "diffusion_steps": "diffusion_steps",
    "init": "init",
    "init_scale_frac": "init_scale_frac",
    "seed": "seed",
    "warmup_iters": "warmup_iters",
    "main_iters": "main_iters",
    "step_size": "step_size",
    "noise_initial": "noise_initial",
    "noise_decay": "noise_decay",
    "sigma_mode": "sigma_mode",
    "sigma_value": "sigma_value",
    "sigma_floor": "sigma_floor",
}


def _add_train_flags(sub: argparse.ArgumentParser, pair_flags: bool = True) -> None:
    g = sub.add_argument_group("training parameters")
    if pair_flags:
        g.add_argument("--order", default=2, help="number of item domains in the data file")
        g.add_argument("--dims", default="2",
                       help="latent dimensions, one value or one per domain")
    g.add_argument("--lambda", dest="lam", default=0.01, help="coordinate regularization weight")
    g.add_argument("--reg", default="l2", help="regularizer norm: l2 or linf")
    g.add_argument("--alpha", default=1.0, help="positive-class prior pseudo-count")
    g.add_argument("--beta", default=10.0, help="negative-class prior pseudo-count")
    g.add_argument("--diffusion-steps", default=1, help="Markov smoothing steps over the counts")
    g.add_argument("--init", default="pca", help="embedding initialization: pca or gaussian")
    g.add_argument("--seed", default=0, help="random seed for init and gradient noise")
    g.add_argument("--warmup-iters", default=100, help="per-domain warmup epochs")
    g.add_argument("--main-iters", default=100, help="joint refinement epochs")
    g.add_argument("--step-size", default=20.0, help="gradient step scale (in bandwidth units)")


def _train_config(args: argparse.Namespace):
    from .data_model import PuConfig
    from .trainer import NoiseSchedule, SigmaPolicy, TrainConfig

    kwargs = dict(
        dims=_as_dims("dims", args.dims),
        lam=_as_float("lambda", args.lam),
        reg_norm=_as_choice("reg", args.reg, ("l2", "linf")),
        pu=PuConfig(alpha=_as_float("alpha", args.alpha), beta=_as_float("beta", args.beta)),
        diffusion_steps=_as_int("diffusion_steps", args.diffusion_steps),
        init=_as_choice("init", args.init, ("pca", "gaussian")),
        seed=_as_int("seed", args.seed),
        warmup_iters=_as_int("warmup_iters", args.warmup_iters),
        main_iters=_as_int("main_iters", args.main_iters),
        step_size=_as_float("step_size", args.step_size),
    )
    # config-file-only knobs (no dedicated flags)
    if getattr(args, "init_scale_frac", None) is not None:
        kwargs["init_scale_frac"] = _as_float("init_scale_frac", args.init_scale_frac)
    noise = {}
    if getattr(args, "noise_initial", None) is not None:
        noise["initial"] = _as_float("noise_initial", args.noise_initial)
    if getattr(args, "noise_decay", None) is not None:
        noise["decay"] = _as_float("noise_decay", args.noise_decay)
    if noise:
        kwargs["noise"] = NoiseSchedule(**noise)
    sigma = {}
    if getattr(args, "sigma_mode", None) is not None:
        sigma["mode"] = _as_choice("sigma_mode", args.sigma_mode, ("variance_fraction", "fixed"))
    if getattr(args, "sigma_value", None) is not None:
        sigma["value"] = _as_float("sigma_value", args.sigma_value)
    if getattr(args, "sigma_floor", None) is not None:
        sigma["floor"] = _as_float("sigma_floor", args.sigma_floor)
    if sigma:
        kwargs["sigma_policy"] = SigmaPolicy(**sigma)
    try:
        return TrainConfig(**kwargs)
    except DataError as exc:
        raise UsageError(str(exc)) from None


def _load_table(path: str, order) -> "object":
    from .data_model import load_cooc_table

    order = _as_int("order", order)
    if order not in (2, 3):
        raise UsageError(f"order must be 2 or 3, got {order}")
    return load_cooc_table(path, order)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_generate(args: argparse.Namespace) -> int:
    from .data_model import generate_synthetic, generate_synthetic_triple, save_synthetic

    order = _as_int("order", args.order)
    n_a = _as_int("n_a", args.n_a)
    n_b = _as_int("n_b", args.n_b)
    n_c = _as_int("n_c", args.n_c) if args.n_c is not None else n_b
    seed = _as_int("seed", args.seed)
    samples = _as_int("samples", args.samples)
    if order == 2:
        data = generate_synthetic(n_a, n_b, seed=seed, samples=samples)
    elif order == 3:
        data = generate_synthetic_triple(n_a, n_b, n_c, seed=seed, samples=samples)
    else:
        raise UsageError(f"order must be 2 or 3, got {order}")
    save_synthetic(data, args.out)
    LOG.info("wrote %s and %s.meta (%d records)", args.out, args.out, len(data.table.counts))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    from .kde import save_model
    from .trainer import train

    cfg = _train_config(args)
    table = _load_table(args.data, args.order)
    model, report = train(table, cfg)
    save_model(model, args.out)
    final = report.final_objective
    LOG.info(
        "wrote %s: objective %.6f (mi %.6f) after %d+%d epochs, %.1fs",
        args.out, final.total, final.mi_term,
        len(report.warmup_trace), len(report.main_trace), report.wall_clock,
    )
    return EXIT_OK


def _config_from_provenance(provenance: Mapping[str, object]):
    from .data_model import PuConfig
    from .trainer import NoiseSchedule, SigmaPolicy, TrainConfig

    sp = provenance.get("sigma_policy", {})
    kwargs = dict(
        dims=tuple(provenance.get("dims", (2,))),
        lam=float(provenance.get("lambda", 0.01)),
        reg_norm=str(provenance.get("reg_norm", "l2")),
        pu=PuConfig(
            alpha=float(provenance.get("pu_alpha", PuConfig.alpha)),
            beta=float(provenance.get("pu_beta", PuConfig.beta)),
        ),
        diffusion_steps=int(provenance.get("diffusion_steps", 1)),
        init=str(provenance.get("init", "pca")),
        seed=int(provenance.get("seed", 0)),
        warmup_iters=int(provenance.get("warmup_iters", 100)),
        main_iters=int(provenance.get("main_iters", 100)),
        step_size=float(provenance.get("step_size", 20.0)),
        use_c=bool(provenance.get("use_c", True)),
    )
    if "init_scale_frac" in provenance:
        kwargs["init_scale_frac"] = float(provenance["init_scale_frac"])
    if "noise_initial" in provenance or "noise_decay" in provenance:
        kwargs["noise"] = NoiseSchedule(
            initial=float(provenance.get("noise_initial", NoiseSchedule.initial)),
            decay=float(provenance.get("noise_decay", NoiseSchedule.decay)),
        )
    if isinstance(sp, Mapping) and sp:
        kwargs["sigma_policy"] = SigmaPolicy(
            mode=str(sp.get("mode", "variance_fraction")),
            value=float(sp.get("value", SigmaPolicy.value)),
            floor=float(sp.get("floor", SigmaPolicy.floor)),
        )
    return TrainConfig(**kwargs)


def _explicit_dests(argv: list[str], parser: argparse.ArgumentParser) -> set[str]:
    """Dests of the flags literally present on the command line."""
    by_flag = {}
    for action in parser._actions:  # argparse offers no public flag table
        for opt in action.option_strings:
            by_flag[opt] = action.dest
    out = set()
    for token in argv:
        if token.startswith("--"):
            out.add(by_flag.get(token.split("=", 1)[0], ""))
    out.discard("")
    return out


def cmd_eval(args: argparse.Namespace) -> int:
    import dataclasses

    from .evaluation import dimension_sweep, kl_eval
    from .kde import load_model
    from .trainer import prepare_from_provenance

    bandwidths = _as_choice("bandwidths", args.bandwidths, ("rot", "training"))
    outer = _as_choice("outer", args.outer, ("product", "uniform"))
    model = load_model(args.model)
    table = _load_table(args.data, model.n_domains)

    if args.dims is None:
        prepared = prepare_from_provenance(table, model.provenance)
        report = kl_eval(model, prepared, bandwidths, outer)
    else:
        # Sweep: retrain per dimension with the model's recorded recipe,
        # any values the user set via config or flags layered on top.
        cfg = _config_from_provenance(model.provenance)
        overridden = (args.explicit_dests | args.config_dests) & (
            set(TRAIN_KEYS.values()) - {"dims", "order"}
        )
        if overridden:
            ns = _overlay_namespace(cfg, args, overridden)
            cfg = dataclasses.replace(_train_config(ns), use_c=cfg.use_c)
        report = dimension_sweep(table, cfg, _as_dims("dims", args.dims), bandwidths, outer)

    text = report.to_text()
    if args.out:
        _atomic_write_text(args.out, text)
        LOG.info("wrote %s (%d rows)", args.out, len(report.rows))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _overlay_namespace(cfg, args: argparse.Namespace, dests: set[str]) -> argparse.Namespace:
    """A reconstructed train config with user-set values layered on top."""
    ns = argparse.Namespace(
        dims=",".join(str(d) for d in cfg.dims),
        lam=cfg.lam,
        reg=cfg.reg_norm,
        alpha=cfg.pu.alpha,
        beta=cfg.pu.beta,
        diffusion_steps=cfg.diffusion_steps,
        init=cfg.init,
        seed=cfg.seed,
        warmup_iters=cfg.warmup_iters,
        main_iters=cfg.main_iters,
        step_size=cfg.step_size,
        init_scale_frac=cfg.init_scale_frac,
        noise_initial=cfg.noise.initial,
        noise_decay=cfg.noise.decay,
        sigma_mode=cfg.sigma_policy.mode,
        sigma_value=cfg.sigma_policy.value,
        sigma_floor=cfg.sigma_policy.floor,
    )
    for dest in dests:
        value = getattr(args, dest, None)
        if value is not None:
            setattr(ns, dest, value)
    return ns


def _parse_given(raw: str) -> tuple[tuple[str, str], ...]:
    entries = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        domain, sep, item = chunk.partition(":")
        if not sep or not domain.strip() or not item.strip():
            raise UsageError(
                f"given entry {chunk!r} must be 'DOMAIN:item'; separate entries with ';'"
            )
        entries.append((domain.strip(), item.strip()))
    if not entries:
        raise UsageError("given must name at least one 'DOMAIN:item' anchor")
    return tuple(entries)


def _heatmap_text(query, grid, ranked) -> str:
    lines = [
        "# cbcp result v1",
        f"target_domain = {grid.target_domain}",
        f"given = {'; '.join(f'{d}:{r}' for d, r in query.given)}",
        f"grid_resolution = {grid.resolution}",
        f"raster_dims = {len(grid.axis_ranges)}",
    ]
    for k, (lo, hi) in enumerate(grid.axis_ranges):
        lines.append(f"axis_range_{k} = {lo!r},{hi!r}")
    lines.append(f"argmax_cell = {','.join(str(i) for i in grid.argmax)}")
    lines.append(f"vmin = {grid.vmin!r}")
    lines.append(f"vmax = {grid.vmax!r}")
    lines.append("")
    lines.append("[ranking]")
    for rank, (item, score) in enumerate(ranked, start=1):
        lines.append(f"{rank}\t{item}\t{score!r}")
    lines.append("")
    lines.append("[heatmap]")
    import numpy as np

    values = np.atleast_2d(np.asarray(grid.values))
    for row in values:
        lines.append("\t".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def cmd_query(args: argparse.Namespace) -> int:
    from .kde import load_model
    from .query import ToiQuery, cbcp_heatmap, cbcp_rank_items
    from .trainer import prepare_from_provenance

    model = load_model(args.model)
    table = prepare_from_provenance(_load_table(args.data, model.n_domains), model.provenance)
    if args.target is None:
        raise UsageError("query needs target (config key 'target' or --target)")
    if args.given is None:
        raise UsageError("query needs given anchors (config key 'given' or --given)")
    q = ToiQuery(
        given=_parse_given(str(args.given)),
        target_domain=str(args.target),
        grid_resolution=_as_int("grid_resolution", args.grid_resolution),
        top_k=_as_int("top_k", args.top_k),
    )
    grid = cbcp_heatmap(model, table, q)
    ranked = cbcp_rank_items(model, table, q)
    text = _heatmap_text(q, grid, ranked)
    if args.out:
        _atomic_write_text(args.out, text)
        LOG.info("wrote %s (argmax cell %s)", args.out, grid.argmax)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve

    serve(
        model_path=args.model,
        data_path=args.data,
        port=_as_int("port", args.port),
        host=str(args.host),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cooc-atlas",
        description="Latent co-occurrence atlases: generate, train, evaluate, query, serve.",
        formatter_class=_formatter,
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + _version())
    subs = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")

    gen = subs.add_parser(
        "generate", help="write a synthetic benchmark table plus sidecar",
        formatter_class=_formatter,
    )
    gen.add_argument("--config", help="key = value file; flags override it")
    gen.add_argument("--order", default=2, help="2 for a pair table, 3 for a triple")
    gen.add_argument("--n-a", default=50, help="items in the first domain")
    gen.add_argument("--n-b", default=50, help="items in the second domain")
    gen.add_argument("--n-c", default=None,
                     help="items in the third domain (order 3; defaults to --n-b)")
    gen.add_argument("--seed", default=7, help="generator seed")
    gen.add_argument("--samples", default=100, help="draws per cell")
    gen.add_argument("--out", required=True, help="output table path (sidecar: <out>.meta)")
    gen.set_defaults(handler=cmd_generate, config_keys={
        "order": "order", "n_a": "n_a", "n_b": "n_b", "n_c": "n_c",
        "seed": "seed", "samples": "samples",
    })

    tr = subs.add_parser(
        "train", help="fit per-domain embeddings to a co-occurrence table",
        formatter_class=_formatter,
    )
    tr.add_argument("--config", help="key = value file; flags override it")
    tr.add_argument("--data", required=True, help="co-occurrence table (tab-separated)")
    tr.add_argument("--out", required=True, help="output model path")
    _add_train_flags(tr)
    tr.set_defaults(handler=cmd_train, config_keys=dict(TRAIN_KEYS))

    ev = subs.add_parser(
        "eval", help="report KL divergence and information bounds for a model",
        formatter_class=_formatter,
    )
    ev.add_argument("--config", help="key = value file; flags override it")
    ev.add_argument("--model", required=True, help="trained model path")
    ev.add_argument("--data", required=True, help="the table the model was trained on")
    ev.add_argument("--dims", default=None,
                    help="comma-separated dimensions to retrain and compare"
                         " (omit to evaluate the model as-is)")
    ev.add_argument("--bandwidths", default="rot",
                    help="evaluation bandwidth policy: rot or training")
    ev.add_argument("--outer", default="product",
                    help="pair weighting for the KL: product or uniform")
    ev.add_argument("--out", default=None, help="report path (default: standard output)")
    _add_train_flags(ev, pair_flags=False)
    ev_keys = {k: v for k, v in TRAIN_KEYS.items() if k not in ("order", "dims")}
    ev_keys.update({"bandwidths": "bandwidths", "outer": "outer"})
    ev.set_defaults(handler=cmd_eval, config_keys=ev_keys)

    qu = subs.add_parser(
        "query", help="one-shot conditional heatmap and ranking to a file",
        formatter_class=_formatter,
    )
    qu.add_argument("--config", help="key = value file; flags override it")
    qu.add_argument("--model", required=True, help="trained model path")
    qu.add_argument("--data", required=True, help="the table the model was trained on")
    qu.add_argument("--target", default=None, help="domain the conditional is read over")
    qu.add_argument("--given", default=None,
                    help="anchors, 'DOMAIN:item' separated by ';'")
    qu.add_argument("--grid-resolution", default=128, help="raster cells per axis")
    qu.add_argument("--top-k", default=10, help="ranked items to keep")
    qu.add_argument("--out", default=None, help="result path (default: standard output)")
    qu.set_defaults(handler=cmd_query, config_keys={
        "target": "target", "given": "given",
        "grid_resolution": "grid_resolution", "top_k": "top_k",
    })

    sv = subs.add_parser(
        "serve", help="serve a frozen model over HTTP for the explorer UI",
        formatter_class=_formatter,
    )
    sv.add_argument("--config", help="key = value file; flags override it")
    sv.add_argument("--model", required=True, help="trained model path")
    sv.add_argument("--data", required=True, help="the table the model was trained on")
    sv.add_argument("--port", default=8000, help="TCP port to listen on")
    sv.add_argument("--host", default="127.0.0.1", help="bind address")
    sv.set_defaults(handler=cmd_serve, config_keys={"port": "port", "host": "host"})

    return parser


def _version() -> str:
    from . import __version__

    return __version__


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    parser = build_parser()
    try:
        scan = argparse.ArgumentParser(add_help=False)
        scan.add_argument("subcommand", nargs="?")
        known, _ = scan.parse_known_args(argv)
        sub_parser = None
        config_dests: set[str] = set()
        if known.subcommand:
            for action in parser._subparsers._group_actions:  # noqa: SLF001
                sub_parser = action.choices.get(known.subcommand)
                break
        if sub_parser is not None:
            defaults = sub_parser._defaults  # noqa: SLF001
            keys = defaults.get("config_keys", {})
            before = dict(defaults)
            _apply_config(sub_parser, keys, argv)
            config_dests = {
                d for d, v in sub_parser._defaults.items()  # noqa: SLF001
                if before.get(d, object()) != v and d not in ("handler", "config_keys")
            }
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            code = exc.code if isinstance(exc.code, int) else EXIT_USAGE
            return EXIT_OK if code == 0 else EXIT_USAGE
        if not getattr(args, "handler", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args.explicit_dests = (
            _explicit_dests(argv, sub_parser) if sub_parser is not None else set()
        )
        args.config_dests = config_dests
        _log_resolved(args.subcommand, args)
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
