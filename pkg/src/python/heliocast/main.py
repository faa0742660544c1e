import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import typer
from loguru import logger
from pydantic import ValidationError

from heliocast.benchmark import plot_csv, records_csv, run_benchmark
from heliocast.clearsky import calibrate_solis
from heliocast.config import load_config, solis_fragment
from heliocast.errors import ConfigError, DataError, HeliocastError, SeriesParseError
from heliocast.evaluation import evaluate, to_csv, to_table
from heliocast.series import parse_csv, read_csv, read_text, serialize_csv
from heliocast.settings import settings, Settings
from heliocast.synthetic import gen_days

cli_app = typer.Typer(
    help="Short-horizon solar irradiance forecasting: P, SP, WM, MLP and CSI-MLP benchmarks.",
    no_args_is_help=True,
)

if settings.sentry_dsn:
    import sentry_sdk
    sentry_sdk.init(
        dsn=settings.sentry_dsn,
        traces_sample_rate=1.0,
    )

CONFIG_HELP = (
    "Flat section.key=value run file. Keys and defaults: "
    "site.lat=48.66 site.lon=6.16 site.alt=230 site.name=nancy-brabois; "
    "solis.tau=0.35 solis.g=0.55 solis.i0_adj=1450 solis.floor=20; "
    "series.ceiling=1500 series.min_valid=55; "
    "bench.horizon_min=60 bench.step_min=60 bench.target= (irradiation at 60/60, else irradiance) "
    "bench.train_years= bench.test_year=2013 bench.methods= (P,SP,WM,MLP,CSI_MLP; empty: all five at 60/60, "
    "P,SP,WM without train years, else SP,WM); "
    "mlp.lags=8 mlp.hidden=10 mlp.lr=0.01 mlp.momentum=0.9 mlp.epochs=200 mlp.patience=20 "
    "mlp.seed=0 mlp.runs=7 mlp.validation_fraction=0.2; "
    "eval.exclude_fallback=false eval.daylight_min_elev=1.0; "
    "synth.regime=broken synth.start_date=2011-01-01 synth.rho=0.995 synth.sigma=0.03 "
    "synth.kt_floor=0.05 synth.kt_mean=0.7 (rho..kt_mean apply to the custom regime)."
)


def _stderr_sink(message):
    sys.stderr.write(message)


def configure_logging(settings_in: Settings):
    logger.remove()
    logger.add(_stderr_sink, level=settings_in.log_level)
    if settings_in.log_file:
        logger.add(settings_in.log_file, level=settings_in.log_level)


def print_banner(settings_in: Settings):
    options = "\n".join([f"{k.upper()}: '{v}'" for k, v in settings_in])
    logger.debug(f"""

        ╦ ╦╔═╗╦  ╦╔═╗╔═╗╔═╗╔═╗╔╦╗
        ╠═╣║╣ ║  ║║ ║║  ╠═╣╚═╗ ║
        ╩ ╩╚═╝╩═╝╩╚═╝╚═╝╩ ╩╚═╝ ╩

        ...starting with following settings:

    {options}
    """)


@contextmanager
def exit_codes(parse_error_code: int = DataError.exit_code):
    """Map domain errors onto the process exit codes (2 config, 3 data)."""
    try:
        yield
    except SeriesParseError:
        raise typer.Exit(parse_error_code)
    except HeliocastError as exc_info:
        raise typer.Exit(getattr(exc_info, "exit_code", DataError.exit_code))
    except ValidationError as exc_info:
        logger.error(f"invalid parameters: {exc_info}")
        raise typer.Exit(ConfigError.exit_code)
    except OSError as exc_info:
        logger.error(f"cannot access file: {exc_info}")
        raise typer.Exit(ConfigError.exit_code)
    except ValueError as exc_info:
        logger.error(f"cannot process data: {exc_info}")
        raise typer.Exit(DataError.exit_code)


@cli_app.callback()
def main():
    configure_logging(settings)
    print_banner(settings)


@cli_app.command()
def ingest(
        input_path: Path = typer.Option(..., "--in", help="Raw timestamp,value CSV."),
        output_path: Path = typer.Option(..., "--out", help="Normalized CSV to write."),
        config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
):
    """Parse and validate a minute CSV, report gaps and spikes, write it normalized."""
    with exit_codes(parse_error_code=ConfigError.exit_code):
        run_config = load_config(config)
        report = read_csv(read_text(input_path), ceiling=run_config.series.ceiling)
        typer.echo(
            f"rows={report.n_rows} gaps={report.n_gaps} spikes={report.n_spikes} "
            f"negative={report.n_negative} unparseable={report.n_unparseable}",
            err=True,
        )
        output_path.write_text(serialize_csv(report.series))
        logger.info(f"{len(report.series)} slots written to {output_path}")


@cli_app.command()
def synth(
        config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
        days: int = typer.Option(365, "--days", help="Number of days to generate."),
        seed: int = typer.Option(0, "--seed", help="Cloud generator seed."),
        output_path: Path = typer.Option(..., "--out", help="CSV to write."),
):
    """Generate a seeded synthetic minute dataset."""
    if days < 1:
        logger.error(f"--days must be at least 1, got {days}")
        raise typer.Exit(ConfigError.exit_code)
    with exit_codes():
        run_config = load_config(config)
        series = gen_days(
            run_config.site_config(),
            run_config.solis_params(),
            run_config.cloud_model(seed),
            run_config.synth.start_date,
            days,
        )
        output_path.write_text(serialize_csv(series))
        logger.info(f"{len(series)} minutes written to {output_path}")


def _report_paths(out_report: Path, out_plot: Optional[Path]):
    stem = out_report.with_suffix("")
    return out_plot or stem.with_suffix(".plot.csv"), stem.with_suffix(".json")


@cli_app.command()
def bench(
        config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
        data: Path = typer.Option(..., "--data", help="Minute CSV spanning the train and test years."),
        out_records: Path = typer.Option(..., "--out-records", help="Per-slot forecast records CSV."),
        out_report: Path = typer.Option(
            ..., "--out-report", help="Report; .csv or .json selects that format, anything else a text table."
        ),
        out_plot: Optional[Path] = typer.Option(
            None, "--out-plot", help="Plot data CSV (default <report stem>.plot.csv)."
        ),
):
    """Run one forecasting experiment and score it."""
    with exit_codes():
        run_config = load_config(config)
        cfg = run_config.to_benchmark_config()
        series = parse_csv(read_text(data), step=60, ceiling=run_config.series.ceiling)

        records = run_benchmark(cfg, series)
        report = evaluate(
            records, cfg.horizon_s, cfg.step_s, cfg.target, exclude_fallback=run_config.eval.exclude_fallback
        )

        out_records.write_text(records_csv(records))
        plot_path, json_path = _report_paths(out_report, out_plot)
        plot_path.write_text(plot_csv(records))

        table = to_table(report)
        if out_report.suffix == ".csv":
            out_report.write_text(to_csv(report))
        elif out_report.suffix == ".json":
            out_report.write_text(report.model_dump_json(indent=2))
        else:
            out_report.write_text(table)
            json_path.write_text(report.model_dump_json(indent=2))
        typer.echo(table)
        logger.info(f"records: {out_records}, report: {out_report}, plot data: {plot_path}")


@cli_app.command()
def calibrate(
        data: Path = typer.Option(..., "--data", help="Minute CSV holding cloud-free days."),
        config: Optional[Path] = typer.Option(None, "--config", help=CONFIG_HELP),
        out: Optional[Path] = typer.Option(None, "--out", help="Write the solis.* fragment here."),
):
    """Fit the Solis parameters to the clear-sky envelope of the data."""
    with exit_codes():
        run_config = load_config(config)
        series = parse_csv(read_text(data), step=60, ceiling=run_config.series.ceiling)
        params = calibrate_solis(series, run_config.site_config(), defaults=run_config.solis_params())
        fragment = solis_fragment(params)
        if out:
            out.write_text(fragment)
            logger.info(f"solis fragment written to {out}")
        else:
            typer.echo(fragment, nl=False)


def app_entrypoint():
    cli_app()


if __name__ == '__main__':
    app_entrypoint()
