from __future__ import annotations

import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
import typer
from loguru import logger
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from ..core.config import BellforgeConfig
from ..core.datatypes import ChshOut, EquivalenceOut, FilterOut, ReportGrid, RevealOut
from ..core.errors import BellforgeError, FormatError
from ..core.scenarios import P_MAX, grid, report_frame, reproduce_report
from ..io.loaders import (
    load_behavior,
    load_config,
    load_filter,
    load_protocol,
    load_settings,
    load_state,
    membership_to_model,
    save_state,
    state_to_model,
    to_json,
)
from ..models.decomposition import build_composed, verify_equivalence
from ..models.filtering import apply_filters
from ..models.polytope import lp_membership, strategies
from ..models.protocols import reveal_one_bit, reveal_two_bits
from ..models.witness import chsh_value

app = typer.Typer(no_args_is_help=True, help="bellforge: revealing hidden Bell nonlocality with local filters and LOCC")
out = Console(width=160)   # fixed width keeps the report table stable when piped
err = Console(stderr=True)

ConfigOpt = typer.Option(None, "--config", "-c", help="Path to YAML config")
VerboseOpt = typer.Option(False, "--verbose", "-v", help="DEBUG logging")
QuietOpt = typer.Option(False, "--quiet", "-q", help="Only WARN+")
JsonOpt = typer.Option(False, "--json", help="Machine-readable output")


def _setup(config: Optional[str], verbose: bool, quiet: bool) -> BellforgeConfig:
    cfg = load_config(config)
    level = "DEBUG" if verbose else "WARNING" if quiet else cfg.run.log_level
    logger.remove()
    logger.add(sys.stderr, level=level)
    return cfg


@contextmanager
def _guard() -> Iterator[None]:
    """Map package errors to exit codes: 2 for unreadable input, 1 for everything else."""
    try:
        yield
    except FormatError as e:
        err.print(f"[red]error:[/red] {escape(str(e))}", highlight=False)
        raise typer.Exit(2)
    except BellforgeError as e:
        err.print(f"[red]error:[/red] {escape(str(e))}", highlight=False)
        raise typer.Exit(1)


def _emit_json(model) -> None:
    typer.echo(to_json(model))


@app.command("filter")
def filter_cmd(state: str = typer.Option(..., "--state", help="State JSON"),
               ma: str = typer.Option(..., "--ma", help="A-side filter JSON"),
               nb: str = typer.Option(..., "--nb", help="B-side filter JSON"),
               out_path: Optional[str] = typer.Option(None, "--out", "-o", help="Write the filtered state here"),
               json_out: bool = JsonOpt, config: Optional[str] = ConfigOpt,
               verbose: bool = VerboseOpt, quiet: bool = QuietOpt):
    """Apply local filters M ⊗ N and report the success probability."""
    with _guard():
        _setup(config, verbose, quiet)
        filtered, p = apply_filters(load_state(state), load_filter(ma), load_filter(nb))
        if out_path:
            save_state(filtered, out_path)
        if json_out:
            _emit_json(FilterOut(probability=p, state=state_to_model(filtered)))
            return
        out.print(f"success probability  {p:.12g}")
        out.print(f"filtered state on    {filtered.space.labels} dims {filtered.space.dims}")
        out.print(np.array2string(filtered.matrix, precision=6, suppress_small=True))


@app.command("reveal")
def reveal_cmd(state: str = typer.Option(..., "--state", help="State JSON"),
               ma: str = typer.Option(..., "--ma", help="A-side filter JSON"),
               nb: Optional[str] = typer.Option(None, "--nb", help="B-side filter JSON (two-bit protocol)"),
               one_bit: bool = typer.Option(False, "--one-bit", help="Only A filters; one message A->B"),
               out_path: Optional[str] = typer.Option(None, "--out", "-o", help="Write the protocol output state here"),
               json_out: bool = JsonOpt, config: Optional[str] = ConfigOpt,
               verbose: bool = VerboseOpt, quiet: bool = QuietOpt):
    """Run the one-bit or two-bit LOCC protocol and print the record-extended state."""
    with _guard():
        _setup(config, verbose, quiet)
        rho = load_state(state)
        if one_bit:
            if nb is not None:
                raise FormatError("--nb cannot be combined with --one-bit (the one-bit protocol uses only the A filter)")
            result, transcript = reveal_one_bit(rho, load_filter(ma))
        else:
            if nb is None:
                raise FormatError("--nb is required unless --one-bit is given")
            result, transcript = reveal_two_bits(rho, load_filter(ma), load_filter(nb))
        if out_path:
            save_state(result, out_path)
        if json_out:
            _emit_json(RevealOut(bits_a_to_b=transcript.bits_A_to_B, bits_b_to_a=transcript.bits_B_to_A,
                                 state=state_to_model(result)))
            return
        out.print(f"bits A->B {transcript.bits_A_to_B}   bits B->A {transcript.bits_B_to_A}")
        out.print(f"state on {result.space.labels} dims {result.space.dims} records {result.records}")
        if result.dim <= 36:
            out.print(np.array2string(result.matrix, precision=6, suppress_small=True))


@app.command("membership")
def membership_cmd(behavior: str = typer.Option(..., "--behavior", help="Behavior JSON"),
                   backend: Optional[str] = typer.Option(None, "--backend", help="LP backend (simplex, highs)"),
                   json_out: bool = JsonOpt, config: Optional[str] = ConfigOpt,
                   verbose: bool = VerboseOpt, quiet: bool = QuietOpt):
    """Decide local-polytope membership; print weights or a Bell inequality."""
    with _guard():
        cfg = _setup(config, verbose, quiet)
        if backend:
            cfg.polytope.backend = backend
        b = load_behavior(behavior)
        result = lp_membership(b, cfg)
        model = membership_to_model(result, b.scenario)
        if json_out:
            _emit_json(model)
            return
        out.print(model.verdict)
        if result.inside:
            t = Table("strategy (rs | ss)", "weight")
            for strat, w in zip(strategies(b.scenario), result.weights):
                if w > 1e-12:
                    t.add_row(f"{strat.rs} | {strat.ss}", f"{w:.6g}")
            out.print(t)
        else:
            c = result.certificate
            out.print(f"{c.kind} certificate: s·p {c.offset:+.9g} <= 0 for local p, violated by {c.margin:.9g}")
            t = Table("k,l", "coefficients")
            for key, block in model.certificate.coefficients.items():
                t.add_row(key, str(np.round(np.asarray(block), 9).tolist()))
            out.print(t)


@app.command("chsh")
def chsh_cmd(state: str = typer.Option(..., "--state", help="State JSON"),
             settings: str = typer.Option(..., "--settings", help="CHSH settings JSON"),
             json_out: bool = JsonOpt, config: Optional[str] = ConfigOpt,
             verbose: bool = VerboseOpt, quiet: bool = QuietOpt):
    """⟨A1(B1+B2) + A2(B1-B2)⟩."""
    with _guard():
        _setup(config, verbose, quiet)
        value = chsh_value(load_state(state), load_settings(settings))
        if json_out:
            _emit_json(ChshOut(chsh=value))
            return
        out.print(f"CHSH {value:.12g}")


REPORT_COLUMNS = ("p", "filter_probability", "chsh", "chsh_closed_form", "chsh_error", "verdict",
                  "chsh_scale_margin", "roundtrip_distance", "bits_a_to_b", "bits_b_to_a")


@app.command("paper")
def paper_cmd(p: float = typer.Option(P_MAX, "--p", help="Mixing weight p in (0, 1/18]"),
              grid_points: Optional[int] = typer.Option(None, "--grid", help="Report N evenly spaced p in (0, p]"),
              csv: Optional[str] = typer.Option(None, "--csv", help="Write the report table as CSV"),
              json_out: bool = JsonOpt, config: Optional[str] = ConfigOpt,
              verbose: bool = VerboseOpt, quiet: bool = QuietOpt):
    """Reproduce the qutrit example: filtering, two-bit protocol, CHSH value and LP verdict."""
    with _guard():
        cfg = _setup(config, verbose, quiet)
        ps = grid(p, grid_points) if grid_points else [p]
        if json_out:
            reports = [reproduce_report(x, cfg) for x in ps]
            _emit_json(reports[0] if grid_points is None else ReportGrid(reports=reports))
            return
        df = report_frame(ps, cfg)
        if csv:
            Path(csv).parent.mkdir(parents=True, exist_ok=True)
            df.to_csv(csv, index=False)
            logger.info("Wrote {} rows to {}", len(df), csv)
        t = Table(*REPORT_COLUMNS)
        for _, row in df.iterrows():
            t.add_row(*(_cell(row[c]) for c in REPORT_COLUMNS))
        out.print(t)


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return "-"
    if isinstance(v, (float, np.floating)):
        return f"{v:.10g}"
    return str(v)


@app.command("decompose-check")
def decompose_check_cmd(protocol: str = typer.Option(..., "--protocol", help="Alternating protocol JSON"),
                        state: str = typer.Option(..., "--state", help="State JSON"),
                        json_out: bool = JsonOpt, config: Optional[str] = ConfigOpt,
                        verbose: bool = VerboseOpt, quiet: bool = QuietOpt):
    """Compare the one-way decomposition, records traced out, with the direct map."""
    with _guard():
        cfg = _setup(config, verbose, quiet)
        proto = load_protocol(protocol)
        rho = load_state(state)
        cmap = build_composed(proto, (rho.a_systems[0], rho.b_systems[0]), cfg)
        dist = verify_equivalence(proto, rho, cfg, cmap=cmap)
        dim = cmap.total_space.dim
        if json_out:
            _emit_json(EquivalenceOut(trace_distance=dist, n=proto.n, composed_dim=dim))
            return
        out.print(f"n={proto.n}  composed dim {dim}  trace distance {dist:.3g}")


def run(argv: Optional[list[str]] = None) -> int:
    """Run the CLI on `argv` and return its exit code instead of exiting."""
    try:
        app(args=argv, prog_name="bellforge")
    except SystemExit as e:
        return int(e.code or 0)
    return 0


# Shortcut entry point for the default example report
def paper_report_cmd():
    app(["paper"])
