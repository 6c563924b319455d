"""
Command line interface.

    deal monitor   watch a sensor and run the action command on departure
    deal replay    print the detector events of one trace file
    deal generate  write a seeded synthetic corpus
    deal evaluate  score a corpus at one operating point
    deal sweep     score a corpus over an (eta, ell, delta) grid
    deal record    capture a live session into a trace file

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import logging
import os
import signal
import sys
import threading
from dataclasses import replace

import click
import daemon

from src import __version__
from src.backend.actions import ActionHook
from src.backend.corpus import Trace, TraceMeta, load_corpus, read_trace, save_corpus, write_trace
from src.backend.detector import AdaptPolicy, Detector, EventKind, Reading
from src.backend.errors import ConfigError, DealError, MissingLabel
from src.backend.evaluation import (
    SweepCell,
    SweepGrid,
    SweepResult,
    group_by,
    group_by_deltas,
    score_corpus,
    sweep as run_sweep,
    unlabeled_sessions,
)
from src.backend.monitor import run_monitor
from src.backend.report_generation import (
    generate_pdf_report,
    render_group_delta_table,
    render_group_table,
    render_result,
    render_sweep_table,
    write_group_csv,
    write_results_csv,
)
from src.backend.sources import SourceConfig, SourceKind, StreamGap, open_source
from src.backend.synth import CORPUS_PRESETS, default_base_specs, gen_corpus, positions_of
from src.config.constants import (
    DEFAULT_HORIZON_S,
    DEFAULT_POLL_HZ,
    DEFAULT_SAMPLE_HZ,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_USAGE,
    POSITIONS,
    SWEEP_DELTA,
    SWEEP_ELL_S,
    SWEEP_ETA_S,
)
from src.config.settings import (
    CORPUS_DIR,
    REPORTS_DIR,
    build_app_config,
    configure_logging,
    load_config_file,
    load_generation_file,
    resolve_config_path,
    validate_app_config,
)
from src.frontend.utils.formatting import format_counts, format_event, parse_tags

logger = logging.getLogger(__name__)


class DealGroup(click.Group):
    """A click group that maps toolkit errors onto the documented exit codes."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            code = super().main(args=args, prog_name=prog_name, complete_var=complete_var,
                                standalone_mode=False, **extra)
        except click.UsageError as exc:
            exc.show()
            code = EXIT_USAGE
        except click.ClickException as exc:
            exc.show()
            code = EXIT_RUNTIME
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = EXIT_RUNTIME
        except ConfigError as exc:
            click.echo(f"Error: {exc}", err=True)
            code = EXIT_USAGE
        except DealError as exc:
            click.echo(f"Error: {exc}", err=True)
            code = EXIT_RUNTIME
        if not isinstance(code, int):
            code = EXIT_OK
        if standalone_mode:
            sys.exit(code)
        return code


# flag name -> config key
FLAG_KEYS = {
    "delta": "detector.delta",
    "omega_s": "detector.omega_s",
    "eta_s": "detector.eta_s",
    "ell_s": "detector.ell_s",
    "adapt_policy": "detector.adapt_policy",
    "cv_max": "detector.cv_max",
    "floor_lux": "detector.floor_lux",
    "source_kind": "source.kind",
    "source_path": "source.path",
    "poll_hz": "source.poll_hz",
    "speed": "source.speed",
    "scale": "source.scale",
    "queue_size": "monitor.queue_size",
    "action": "action_command",
    "dry_run": "dry_run",
    "log": "log_path",
}

_DETECTOR_FLAGS = {
    "delta": click.option("--delta", "delta", type=int, default=None,
                          help="Outlier threshold in percent of the window mean (default 5)."),
    "omega_s": click.option("--omega", "omega_s", type=float, default=None,
                            help="Window length in seconds (default 3)."),
    "eta_s": click.option("--eta", "eta_s", type=float, default=None,
                          help="Seconds of consecutive outliers that de-authenticate (default 1.5)."),
    "ell_s": click.option("--ell", "ell_s", type=float, default=None,
                          help="Seconds allowed for them after the first outlier (default 4)."),
    "adapt_policy": click.option("--adapt-policy", "adapt_policy",
                                 type=click.Choice([policy.value for policy in AdaptPolicy]), default=None,
                                 help="step-reseed re-seeds the window on flat lighting steps."),
    "cv_max": click.option("--cv-max", "cv_max", type=float, default=None,
                           help="Coefficient of variation below which a run is a lighting step."),
    "floor_lux": click.option("--floor-lux", "floor_lux", type=float, default=None,
                              help="Lowest outlier threshold in lux (default 0)."),
}


def detector_options(*names):
    """Attach the detector flags (all of them by default) to a command."""
    def decorate(command):
        for name in reversed(names or tuple(_DETECTOR_FLAGS)):
            command = _DETECTOR_FLAGS[name](command)
        return command
    return decorate


def _app_config(ctx, flags, for_monitor=False):
    overrides = {FLAG_KEYS[name]: value for name, value in flags.items() if name in FLAG_KEYS}
    config_path = resolve_config_path(ctx.obj.get("config_path"))
    app = build_app_config(load_config_file(config_path), overrides)
    return validate_app_config(app, for_monitor=for_monitor)


def _load_labeled_corpus(corpus_dir):
    loaded = load_corpus(corpus_dir)
    for path, error in loaded.errors:
        click.echo(f"warning: skipped {path}: {error}", err=True)
    unlabeled = unlabeled_sessions(loaded.traces)
    if unlabeled:
        shown = ", ".join(unlabeled[:10])
        raise MissingLabel(f"{len(unlabeled)} session(s) without departure_t: {shown}")
    return loaded.traces


@click.group(cls=DealGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Config file of 'key = value' lines (default: $DEAL_CONFIG).")
@click.option("--verbose", "-v", is_flag=True, help="Also log outliers and debug messages.")
@click.version_option(version=__version__, prog_name="deal")
@click.pass_context
def cli(ctx, config_path, verbose):
    """Departure detection from ambient light sensor readings."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["verbose"] = verbose


@cli.command()
@detector_options()
@click.option("--source-kind", "source_kind", type=click.Choice([kind.value for kind in SourceKind]),
              default=None, help="live polls a device file, replay plays a trace (default live).")
@click.option("--source", "source_path", default=None, help="Device file or trace file.")
@click.option("--poll-hz", "poll_hz", type=float, default=None, help="Live polling rate (default 10).")
@click.option("--speed", type=float, default=None, help="Replay speed, 0 = as fast as possible.")
@click.option("--scale", type=float, default=None, help="Multiplier applied to raw device values.")
@click.option("--action", default=None, help="Command run on de-authentication, e.g. a screen locker.")
@click.option("--dry-run/--no-dry-run", "dry_run", default=None, help="Log instead of running the action.")
@click.option("--log", default=None, type=click.Path(dir_okay=False), help="Audit log file.")
@click.option("--queue-size", "queue_size", type=int, default=None, help="Readings buffered between threads.")
@click.option("--detach", is_flag=True, help="Run in the background as a daemon (needs --log).")
@click.pass_context
def monitor(ctx, detach, **flags):
    """Watch the sensor and run the action command whenever the user leaves."""
    app = _app_config(ctx, flags, for_monitor=True)
    handlers = configure_logging(app.log_path, ctx.obj["verbose"])
    if not detach:
        return _monitor(app)
    if not app.log_path:
        raise click.UsageError("--detach needs an audit log (--log or log_path)")
    preserved = [handler.stream for handler in handlers if isinstance(handler, logging.FileHandler)]
    with daemon.DaemonContext(working_directory=os.getcwd(), files_preserve=preserved):
        return _monitor(app)


def _monitor(app):
    source = open_source(app.source)
    hook = ActionHook(app.action_command, app.dry_run)
    stop = threading.Event()

    def _terminate(signum, frame):
        logger.info("received signal %s, stopping", signum)
        stop.set()

    try:
        previous = signal.signal(signal.SIGTERM, _terminate)
    except ValueError:
        # not on the main thread
        previous = None
    try:
        stats = run_monitor(source, app.detector, hook, app.queue_size, stop)
        logger.info("stopped after %d readings: %d de-authentication(s), %d gap(s)",
                    stats.readings, stats.deauths, stats.gaps)
    except KeyboardInterrupt:
        logger.info("interrupted")
    finally:
        source.close()
        if previous is not None:
            signal.signal(signal.SIGTERM, previous)
    return EXIT_OK


@cli.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@detector_options()
@click.option("--events", "show_events", is_flag=True,
              help="Print every outlier, wave reset, adaptation and de-authentication.")
@click.pass_context
def replay(ctx, trace_file, show_events, **flags):
    """Run one trace through the detector and print what it decides."""
    app = _app_config(ctx, flags)
    configure_logging(None, ctx.obj["verbose"])
    trace = read_trace(trace_file)
    detector = Detector(app.detector, trace.meta.f)
    deauths = 0
    for reading in trace.readings:
        event = detector.feed(reading)
        if event.kind in (EventKind.NONE, EventKind.WARMING):
            continue
        if show_events or event.kind is EventKind.DEAUTHENTICATE:
            click.echo(format_event(event))
        if event.kind is EventKind.DEAUTHENTICATE:
            deauths += 1
            detector.rearm()
    click.echo(f"{trace.meta.session_id}: {len(trace.readings)} readings, {deauths} de-authentication(s)")
    return EXIT_OK


@cli.command()
@click.argument("out_dir", type=click.Path(file_okay=False), default=CORPUS_DIR)
@click.option("--spec", "spec_file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Generation file of 'key = value' lines; flags override it.")
@click.option("--per-position", "-n", "per_position", type=int, default=None,
              help="Sessions per position (default 10).")
@click.option("--seed", type=int, default=None, help="Corpus seed (default 0).")
@click.option("--preset", type=click.Choice(sorted(CORPUS_PRESETS)), default=None,
              help="Magnitude/duration ranges (default clean).")
@click.option("--hz", type=float, default=None, help="Sampling frequency (default 10).")
@click.option("--noise-fraction", "noise_fraction", type=float, default=None,
              help="Noise standard deviation as a fraction of the baseline.")
@click.pass_context
def generate(ctx, out_dir, spec_file, **flags):
    """Write a seeded synthetic corpus of labeled sessions."""
    configure_logging(None, ctx.obj["verbose"])
    values = load_generation_file(spec_file) if spec_file else {}
    values.update({key: value for key, value in flags.items() if value is not None})

    preset = values.get("preset", "clean")
    if preset not in CORPUS_PRESETS:
        raise ConfigError(f"unknown preset {preset!r}, expected one of {', '.join(sorted(CORPUS_PRESETS))}")
    ranges = CORPUS_PRESETS[preset]
    ranges = replace(
        ranges,
        magnitude=(values.get("magnitude_min", ranges.magnitude[0]),
                   values.get("magnitude_max", ranges.magnitude[1])),
        movement_s=(values.get("movement_min_s", ranges.movement_s[0]),
                    values.get("movement_max_s", ranges.movement_s[1])),
        sit_duration_s=(values.get("sit_min_s", ranges.sit_duration_s[0]),
                        values.get("sit_max_s", ranges.sit_duration_s[1])),
        noise_fraction=values.get("noise_fraction", ranges.noise_fraction),
    )
    base_specs = default_base_specs(f=values.get("hz", DEFAULT_SAMPLE_HZ),
                                    noise_fraction=ranges.noise_fraction)
    traces = gen_corpus(values.get("per_position", 10), base_specs, values.get("seed", 0), ranges)
    save_corpus(traces, out_dir)
    click.echo(f"wrote {len(traces)} traces to {out_dir}")
    click.echo(format_counts(positions_of(traces)))
    return EXIT_OK


@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@detector_options("omega_s", "eta_s", "ell_s", "adapt_policy", "cv_max", "floor_lux")
@click.option("--delta", "deltas", type=int, multiple=True,
              help="Outlier threshold in percent; repeat with --group-by for one column per value.")
@click.option("--horizon", type=float, default=DEFAULT_HORIZON_S, show_default=True,
              help="Seconds after departure_t within which a de-authentication counts.")
@click.option("--group-by", "group_key", default=None, help="position, session_id or a tag name.")
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), default=None, help="Also write CSV here.")
@click.pass_context
def evaluate(ctx, corpus_dir, deltas, horizon, group_key, out_csv, **flags):
    """Score a labeled corpus at one operating point."""
    distinct = sorted(set(deltas))
    if len(distinct) > 1 and not group_key:
        raise click.UsageError("several --delta values need --group-by (use 'sweep' for a grid)")
    if len(distinct) == 1:
        flags["delta"] = distinct[0]
    app = _app_config(ctx, flags)
    configure_logging(None, ctx.obj["verbose"])
    traces = _load_labeled_corpus(corpus_dir)
    cfg = app.detector

    if group_key:
        if len(distinct) > 1:
            table = group_by_deltas(traces, cfg, group_key, distinct, horizon)
            click.echo(render_group_delta_table(group_key, table))
        else:
            groups = group_by(traces, cfg, group_key, horizon)
            table = {label: {cfg.delta: result} for label, result in groups.items()}
            click.echo(render_group_table(group_key, groups))
        if out_csv:
            write_group_csv(group_key, table, cfg.eta_s, cfg.ell_s, out_csv)
        return EXIT_OK

    result = score_corpus(traces, cfg, horizon)
    click.echo(render_result(result))
    if out_csv:
        single = SweepResult(cells=[SweepCell(cfg.eta_s, cfg.ell_s, cfg.delta, result)])
        write_results_csv(single, out_csv)
    return EXIT_OK


@cli.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--eta", "etas", type=float, multiple=True, help="eta values in seconds (default 1, 1.5, 2).")
@click.option("--ell", "ells", type=float, multiple=True, help="ell values in seconds (default 2, 3, 4).")
@click.option("--delta", "deltas", type=int, multiple=True, help="delta values in percent (default 5..20).")
@detector_options("omega_s", "adapt_policy", "cv_max", "floor_lux")
@click.option("--horizon", type=float, default=DEFAULT_HORIZON_S, show_default=True)
@click.option("--out", "out_csv", type=click.Path(dir_okay=False), default=None,
              help="CSV destination (default: reports/sweep.csv).")
@click.option("--pdf", "pdf_path", type=click.Path(dir_okay=False), default=None,
              help="Also write a PDF report with a hit-rate chart.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True,
              help="Processes used to score grid cells.")
@click.pass_context
def sweep(ctx, corpus_dir, etas, ells, deltas, horizon, out_csv, pdf_path, workers, **flags):
    """Score a labeled corpus over an (eta, ell, delta) grid."""
    app = _app_config(ctx, flags)
    configure_logging(None, ctx.obj["verbose"])
    traces = _load_labeled_corpus(corpus_dir)
    grid = SweepGrid(
        eta_s=tuple(etas) or SWEEP_ETA_S,
        ell_s=tuple(ells) or SWEEP_ELL_S,
        delta=tuple(deltas) or SWEEP_DELTA,
    )
    result = run_sweep(traces, grid, app.detector.omega_s, horizon, base=app.detector, workers=workers)
    out_csv = out_csv or os.path.join(REPORTS_DIR, "sweep.csv")
    write_results_csv(result, out_csv)
    click.echo(render_sweep_table(result))
    click.echo(f"wrote {len(result.cells)} rows to {out_csv}")
    if pdf_path:
        generate_pdf_report(result, pdf_path, corpus_label=str(corpus_dir), sessions=len(traces))
        click.echo(f"wrote PDF report to {pdf_path}")
    return EXIT_OK


@cli.command()
@click.argument("out_file", type=click.Path(dir_okay=False))
@click.option("--device", "source_path", required=True, help="Illuminance device file to poll.")
@click.option("--poll-hz", "poll_hz", type=float, default=DEFAULT_POLL_HZ, show_default=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--duration", type=float, required=True, help="Seconds to record.")
@click.option("--session-id", "session_id", required=True)
@click.option("--position", type=click.Choice(POSITIONS), default="other", show_default=True)
@click.option("--departure-t", "departure_t", type=float, default=None,
              help="Departure label in seconds from the first reading.")
@click.option("--tag", "tags", multiple=True, help="key=value metadata, repeatable.")
@click.pass_context
def record(ctx, out_file, source_path, poll_hz, scale, duration, session_id, position, departure_t, tags):
    """Capture a live session into a trace file."""
    configure_logging(None, ctx.obj["verbose"])
    try:
        tag_map = parse_tags(tags)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--tag") from None
    if not duration > 0:
        raise click.BadParameter("must be > 0", param_hint="--duration")

    source = open_source(SourceConfig(SourceKind.LIVE, source_path, poll_hz=poll_hz, scale=scale))
    readings = []
    first_t = None
    try:
        while True:
            item = source.next_reading()
            if item is None:
                break
            if isinstance(item, StreamGap):
                logger.warning("polls stalled for %.3f s at t=%.3f; the gap stays in the trace",
                               item.gap_s, item.at)
                continue
            if first_t is None:
                first_t = item.t
            t = item.t - first_t
            if t >= duration:
                break
            readings.append(Reading(t, item.lux))
    finally:
        source.close()

    meta = TraceMeta(session_id=session_id, position=position, f=poll_hz,
                     departure_t=departure_t, tags=tag_map)
    write_trace(Trace(meta=meta, readings=tuple(readings)), out_file)
    click.echo(f"recorded {len(readings)} readings to {out_file}")
    return EXIT_OK
