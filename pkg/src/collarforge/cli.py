"""
The collarforge command line.

Every subcommand reads its inputs, writes one JSON report (or CSV for
`sequence --out PATH.csv`) and prints a one-line summary. Exit codes: 0 on
success or a passing verdict, 1 on a failed certificate, a sequence that does
not converge or a numerical failure, 2 on bad input.
"""

import argparse
import logging
import re
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NoReturn

import yaml

from collarforge.atlas_types import PointedManifold
from collarforge.certifier import certify
from collarforge.convergence import (
    GHMode,
    NetMethod,
    boundary_align,
    gh_distance,
    interpolate_diffeo,
    net_from_document,
    sample_net,
)
from collarforge.errors import INPUT_ERRORS, CollarforgeError, InputError
from collarforge.family_loader import ensure_families, family_names
from collarforge.manifold_atlas import (
    builtin_manifold,
    manifold_to_document,
    read_document,
    read_manifold,
    write_document,
)
from collarforge.metric_extension import (
    ExtendedManifold,
    build_height_function,
    extend_metric,
)
from collarforge.profiles import CutoffProfile
from collarforge.sequences import SequenceFamily, run_sequence
from collarforge.settings import LOG_LEVELS, Settings, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2

# φ = 1 where |f∞| <= 1/8 and 0 outside the sampled band |f∞| < 1/4.
ALIGN_CUTOFF = CutoffProfile(s0=0.125, s1=0.25)


@dataclass(frozen=True, kw_only=True)
class CommandOutcome:
    exit_code: int
    report_path: Path | None = None
    summary: str = ""

    def __post_init__(self):
        if self.exit_code not in (EXIT_OK, EXIT_FAILED, EXIT_INPUT):
            raise ValueError(f"unknown exit code {self.exit_code}")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise InputError(f"{self.prog}: {message}")


## Flag parsing


def parse_params(tokens: Sequence[str]) -> dict[str, Any]:
    """KEY=VALUE tokens, each value read as a YAML scalar."""
    params = {}
    for token in tokens:
        key, sep, raw = token.partition("=")
        if not sep or not key:
            raise InputError(f"--params expects KEY=VALUE, got {token!r}")
        try:
            params[key] = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise InputError(f"bad value for {key}: {raw!r}") from e
    return params


def parse_indices(text: str) -> list[int]:
    """`I..J` for the whole range, or a comma separated list."""
    if match := re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text):
        first, last = int(match[1]), int(match[2])
        if last < first:
            raise InputError(f"empty index range {text!r}")
        return list(range(first, last + 1))
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise InputError(f"--indices expects I..J or I,J,..., got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ensure_families()
    parser = _Parser(
        prog="collarforge",
        description=(
            "Bounded geometry certificates, metric extension and convergence "
            "experiments for manifolds with boundary"
        ),
    )
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Directory holding config.yml (default ~/.config/collarforge)",
    )
    parser.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS)
    parser.add_argument(
        "--seed", type=int, help="Turns polar nets; recorded in every report"
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    generate = commands.add_parser("generate", help="Build a family manifold")
    generate.add_argument("--family", required=True, choices=family_names())
    generate.add_argument("--params", nargs="*", default=[], metavar="K=V")
    generate.add_argument("--out", type=Path, required=True)

    cert = commands.add_parser("certify", help="Certify bounded geometry")
    cert.add_argument("path", type=Path)
    cert.add_argument("--c", type=float, required=True)
    cert.add_argument("--k", type=int, required=True)
    cert.add_argument("--samples-per-axis", type=int, default=4)
    cert.add_argument("--out", type=Path, required=True)

    extend = commands.add_parser("extend", help="Extend the metric past ∂M")
    extend.add_argument("path", type=Path)
    extend.add_argument("--seeley-order", type=int)
    extend.add_argument("--depth", type=float)
    extend.add_argument("--out", type=Path, required=True)

    height = commands.add_parser("heightfn", help="Extend and build a height function")
    height.add_argument("path", type=Path)
    height.add_argument("--c", type=float, help="Default: the least passing c")
    height.add_argument("--k", type=int, default=1)
    height.add_argument("--seeley-order", type=int)
    height.add_argument("--depth", type=float)
    height.add_argument("--out", type=Path, required=True)

    net = commands.add_parser("net", help="Sample a net of B(x⁰, r)")
    net.add_argument("path", type=Path)
    net.add_argument("--radius", type=float, required=True)
    net.add_argument("--count", type=int)
    net.add_argument(
        "--method", choices=[str(m) for m in NetMethod], default=NetMethod.FPS
    )
    net.add_argument("--out", type=Path, required=True)

    gh = commands.add_parser("ghdist", help="GH distance of two nets")
    gh.add_argument("path_a", type=Path)
    gh.add_argument("path_b", type=Path)
    gh.add_argument("--mode", choices=[str(m) for m in GHMode])
    gh.add_argument("--out", type=Path, required=True)

    align = commands.add_parser("align", help="Align the boundaries of two manifolds")
    align.add_argument("path_limit", type=Path)
    align.add_argument("path_item", type=Path)
    align.add_argument("--radius", type=float, required=True)
    align.add_argument("--seeley-order", type=int)
    align.add_argument("--depth", type=float)
    align.add_argument("--out", type=Path, required=True)

    seq = commands.add_parser("sequence", help="Run a sequence experiment")
    seq.add_argument(
        "--family", required=True, choices=[str(f) for f in SequenceFamily]
    )
    seq.add_argument("--indices", required=True, help="I..J or I,J,...")
    seq.add_argument("--radius", type=float, required=True)
    seq.add_argument("--k", type=int, required=True)
    seq.add_argument("--threshold", type=float, help="Default: the radius")
    seq.add_argument("--count", type=int)
    seq.add_argument("--mode", choices=[str(m) for m in GHMode])
    seq.add_argument("--no-extend", dest="extend", action="store_false")
    seq.add_argument("--out", type=Path, required=True)
    return parser


def _setting_flags(args: argparse.Namespace) -> dict[str, Any]:
    return {
        "seed": args.seed,
        "log_level": args.log_level,
        "seeley_order": getattr(args, "seeley_order", None),
        "depth": getattr(args, "depth", None),
        "net_count": getattr(args, "count", None),
        "gh_mode": getattr(args, "mode", None),
    }


## Reports


def _write_report(document: dict[str, Any], path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_document(document, path)
    except OSError as e:
        raise InputError(f"{path}: cannot write ({e.strerror})") from e
    logger.info(f"wrote {path}")


def _report(command: str, settings: Settings, **content: Any) -> dict[str, Any]:
    return {"command": command, "settings": settings.to_document(), **content}


## Commands


def _generate(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    manifold = builtin_manifold(args.family, parse_params(args.params))
    _write_report(manifold_to_document(manifold), args.out)
    return CommandOutcome(
        exit_code=EXIT_OK,
        report_path=args.out,
        summary=f"{manifold.name}: {len(manifold.charts)} charts -> {args.out}",
    )


def _certify(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    manifold = read_manifold(args.path)
    certificate = certify(
        manifold, args.c, args.k, samples_per_axis=args.samples_per_axis
    )
    _write_report(
        _report("certify", settings, certificate=certificate.to_document()),
        args.out,
    )
    if certificate.passed:
        verdict = "passed"
    else:
        verdict = "failed (" + ", ".join(str(c) for c in certificate.failed) + ")"
    return CommandOutcome(
        exit_code=EXIT_OK if certificate.passed else EXIT_FAILED,
        report_path=args.out,
        summary=f"{manifold.name}: bounded geometry (c={args.c}, k={args.k}) {verdict}",
    )


def _extended(manifold: PointedManifold, settings: Settings) -> ExtendedManifold:
    return extend_metric(manifold, settings.seeley_order, settings.depth)


def _extend(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    extended = _extended(read_manifold(args.path), settings)
    document = extended.to_document()
    document["settings"] = settings.to_document()
    _write_report(document, args.out)
    return CommandOutcome(
        exit_code=EXIT_OK,
        report_path=args.out,
        summary=(
            f"{extended.source.name}: extended to depth {extended.depth:.4g}, "
            f"eigenvalue floor {extended.floor:.4g}"
        ),
    )


def _heightfn(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    extended = build_height_function(
        _extended(read_manifold(args.path), settings), c=args.c, k=args.k
    )
    document = extended.to_document()
    document["settings"] = settings.to_document()
    _write_report(document, args.out)
    certificate = extended.height_certificate
    passed = certificate is not None and certificate.passed
    constant = "none" if certificate is None else f"{certificate.c:.4g}"
    return CommandOutcome(
        exit_code=EXIT_OK if passed else EXIT_FAILED,
        report_path=args.out,
        summary=(
            f"{extended.source.name}: height function "
            f"{'passed' if passed else 'failed'} with c = {constant}"
        ),
    )


def _net(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    manifold = read_manifold(args.path)
    net = sample_net(
        manifold,
        args.radius,
        settings.net_count,
        method=NetMethod(args.method),
        seed=settings.seed,
    )
    _write_report(net.to_document() | {"settings": settings.to_document()}, args.out)
    return CommandOutcome(
        exit_code=EXIT_OK,
        report_path=args.out,
        summary=(
            f"{manifold.name}: {net.size} point {net.method} net of radius "
            f"{args.radius}, diameter {net.diameter:.4g}"
        ),
    )


def _ghdist(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    a = net_from_document(read_document(args.path_a))
    b = net_from_document(read_document(args.path_b))
    report = gh_distance(a, b, settings.gh_mode)
    _write_report(_report("ghdist", settings, gh=report.to_document()), args.out)
    return CommandOutcome(
        exit_code=EXIT_OK,
        report_path=args.out,
        summary=f"GH ε = {report.epsilon:.6g} ({report.mode})",
    )


def _same_layout(a: PointedManifold, b: PointedManifold) -> bool:
    if a.charts.keys() != b.charts.keys():
        return False
    return all(
        a.chart(cid).resolution == b.chart(cid).resolution for cid in a.charts
    )


def _align(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    limit = read_manifold(args.path_limit)
    item = read_manifold(args.path_item)
    if not _same_layout(limit, item):
        raise InputError(
            f"{limit.name!r} and {item.name!r} need the same charts and resolutions"
        )
    limit_x = build_height_function(_extended(limit, settings))
    item_x = build_height_function(_extended(item, settings))
    if limit_x.height is None or item_x.height is None:
        raise InputError("height functions were not built")
    f_inf, f_tilde = dict(limit_x.height), dict(item_x.height)
    if f_inf.keys() != f_tilde.keys() or any(
        f_inf[cid].shape != f_tilde[cid].shape for cid in f_inf
    ):
        raise InputError("the extended atlases of the two manifolds differ")

    alignment = boundary_align(limit_x.manifold, f_inf, f_tilde, args.radius)
    alignment = interpolate_diffeo(alignment, ALIGN_CUTOFF, limit_x.manifold)
    _write_report(
        _report(
            "align",
            settings,
            limit=limit.name,
            item=item.name,
            radius=args.radius,
            alignment=alignment.to_document(),
        ),
        args.out,
    )
    return CommandOutcome(
        exit_code=EXIT_OK,
        report_path=args.out,
        summary=(
            f"aligned {len(alignment.sources)} samples, longest flow time "
            f"{alignment.longest_time:.4g} <= {alignment.time_bound:.4g}"
        ),
    )


def _sequence(args: argparse.Namespace, settings: Settings) -> CommandOutcome:
    report = run_sequence(
        args.family,
        parse_indices(args.indices),
        args.radius,
        args.k,
        threshold=args.threshold,
        count=settings.net_count,
        mode=settings.gh_mode,
        extend=args.extend,
        seeley_order=settings.seeley_order,
        tolerance=settings.tolerance,
        seed=settings.seed,
        settings=settings.to_document(),
    )
    if args.out.suffix == ".csv":
        report.to_csv(args.out)
        logger.info(f"wrote {args.out}")
    else:
        _write_report(_report("sequence", settings, **report.to_document()), args.out)
    return CommandOutcome(
        exit_code=EXIT_OK if report.converging else EXIT_FAILED,
        report_path=args.out,
        summary=(
            f"{report.family}: converging = {report.converging}, "
            f"limit has boundary = {report.limit_has_boundary}"
        ),
    )


COMMANDS: dict[str, Callable[[argparse.Namespace, Settings], CommandOutcome]] = {
    "generate": _generate,
    "certify": _certify,
    "extend": _extend,
    "heightfn": _heightfn,
    "net": _net,
    "ghdist": _ghdist,
    "align": _align,
    "sequence": _sequence,
}


## Entry points


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[logging.StreamHandler()],
    )


def run_command(
    argv: Sequence[str], *, configure_logging: bool = False
) -> CommandOutcome:
    """Parses `argv`, runs the subcommand and prints its summary line."""
    try:
        args = build_parser().parse_args(list(argv))
        settings = load_settings(args.config, **_setting_flags(args))
        if configure_logging:
            _configure_logging(settings.log_level)
        outcome = COMMANDS[args.command](args, settings)
    except INPUT_ERRORS as e:
        outcome = CommandOutcome(exit_code=EXIT_INPUT, summary=f"error: {e}")
    except CollarforgeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        outcome = CommandOutcome(exit_code=EXIT_FAILED, summary=f"error: {e}")
    print(outcome.summary)
    return outcome


def main(argv: Sequence[str] | None = None) -> int:
    outcome = run_command(
        sys.argv[1:] if argv is None else argv, configure_logging=True
    )
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
