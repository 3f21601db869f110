import sys
import json
import asyncio
import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import click

from config import Config
from database.db import StoreError, Stores
from features.corpus import ManifestError, format_corpus_report, run_corpus
from features.fetcher import Fetcher, PageUrl
from features.fragmenter import ClueFileError, load_clues
from features.rules import RuleFileError, load_rules
from features.simulator import SimConfig, format_report, report, sweep, uplift_analysis, write_records
from features.wextractor import LiveBackend, OrchestratorConfig, REFRESH_MODES, SuccessCode, Wextractor
from handlers.service import create_app, start_service
from utils.helpers import format_minor

logger = logging.getLogger(__name__)

EXIT_CODES = {
    SuccessCode.FROM_SCRATCH: 0,
    SuccessCode.POINTING_PATTERN: 0,
    SuccessCode.SOCIAL: 0,
    SuccessCode.NOT_FOUND: 2,
    SuccessCode.UNAVAILABLE: 3,
}


def setup_logging(stores_dir: str, verbose: bool):
    handlers, file_error = [logging.StreamHandler(sys.stderr)], None
    try:
        Path(stores_dir).mkdir(parents=True, exist_ok=True)
        handlers.insert(0, logging.FileHandler(Path(stores_dir) / "wextract.log"))
    except OSError as e:
        file_error = e
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )
    for noisy in ("httpx", "httpcore", "aiohttp.access"):
        logging.getLogger(noisy).setLevel(logging.WARNING)
    if file_error is not None:
        logger.warning(f"Logging to stderr only, cannot write a log file in {stores_dir}: {file_error}")


@dataclass
class AppContext:
    config: Config
    as_json: bool

    def clues(self) -> list:
        return load_clues(self.config.CLUES_FILE)

    def rules(self) -> list:
        return load_rules(self.config.RULES_FILE)

    def stores(self) -> Stores:
        return Stores.open(self.config.STORES_DIR)

    def orchestrator_config(self, refresh_mode=None) -> OrchestratorConfig:
        return OrchestratorConfig.from_config(self.config, refresh_mode)

    def fetcher(self) -> Fetcher:
        return Fetcher(timeout=self.config.TIMEOUT, user_agent=self.config.USER_AGENT)

    def emit(self, data, text: str):
        click.echo(json.dumps(data, indent=2, default=str) if self.as_json else text)


class WextractGroup(click.Group):
    """Bad flags exit with 1; 2 and 3 are kept for extraction outcomes."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = 1
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = 1
            raise
        except (ClueFileError, RuleFileError, ManifestError, StoreError, ValueError) as e:
            raise click.ClickException(str(e)) from e


@click.group(cls=WextractGroup)
@click.option("--stores", type=click.Path(file_okay=False), help="Store directory (env WEXTRACT_STORES)")
@click.option("--rules", type=click.Path(dir_okay=False), help="Rule file (env WEXTRACT_RULES)")
@click.option("--clues", type=click.Path(dir_okay=False), help="Clue file (env WEXTRACT_CLUES)")
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), help="KEY=value settings file")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx, stores, rules, clues, config_file, as_json, verbose):
    """Browserless product price extraction."""
    config = Config(config_file)
    if stores:
        config.STORES_DIR = stores
    if rules:
        config.RULES_FILE = rules
    if clues:
        config.CLUES_FILE = clues
    setup_logging(config.STORES_DIR, verbose)
    ctx.obj = AppContext(config, as_json)


@cli.command()
@click.argument("url")
@click.option("--entity", default=None, help="What the page sells, used to label the cached price")
@click.option("--refresh-mode", type=click.Choice(REFRESH_MODES), default=None)
@click.option("--narrow-digits", is_flag=True, help="Patterns accept d-1..d integer digits instead of d-1..d+1")
@click.pass_obj
def extract(app: AppContext, url, entity, refresh_mode, narrow_digits):
    """Extract the price of the product on URL."""
    try:
        page_url = PageUrl.parse(url)
    except ValueError as e:
        raise click.BadParameter(str(e), param_hint="URL")
    clues, rules, stores = app.clues(), app.rules(), app.stores()

    async def run():
        async with app.fetcher() as fetcher:
            backend = LiveBackend(fetcher, clues, rules, stores, app.config.FRAGMENT_CAP, narrow_digits)
            wextractor = Wextractor(app.orchestrator_config(refresh_mode), stores, backend)
            return await wextractor.extract(page_url, entity)

    outcome = asyncio.run(run())
    price = f"{outcome.price.amount} {outcome.price.currency_code}" if outcome.price else "no price"
    app.emit(outcome.to_dict(), f"code {int(outcome.code)}: {price}  ({outcome.url})")
    sys.exit(EXIT_CODES[outcome.code])


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
@click.pass_obj
def corpus(app: AppContext, manifest, jobs):
    """From-scratch extraction over a manifest of local pages, scored against expected prices."""
    result = asyncio.run(run_corpus(manifest, app.clues(), app.rules(), jobs, app.config.FRAGMENT_CAP))
    app.emit(result.to_dict(), format_corpus_report(result))


@cli.command()
@click.option("--host", default=None, help="Bind address (env WEXTRACT_HOST)")
@click.option("--port", default=None, type=click.IntRange(min=0, max=65535), help="0 picks a free port")
@click.option("--no-extract", is_flag=True, help="Serve cached prices only")
@click.pass_obj
def serve(app: AppContext, host, port, no_extract):
    """Answer price queries from the social store over HTTP."""
    host = host or app.config.SERVE_HOST
    port = app.config.SERVE_PORT if port is None else port
    stores = app.stores()
    clues, rules = (None, None) if no_extract else (app.clues(), app.rules())

    async def run():
        async with app.fetcher() as fetcher:
            wextractor = None
            if not no_extract:
                backend = LiveBackend(fetcher, clues, rules, stores, app.config.FRAGMENT_CAP)
                wextractor = Wextractor(app.orchestrator_config(), stores, backend)
            try:
                runner = await start_service(create_app(stores, wextractor), host, port)
            except OSError as e:
                raise click.ClickException(f"Cannot bind {host}:{port}: {e}") from e
            try:
                bound = runner.addresses[0][1] if runner.addresses else port
                click.echo(f"Serving on http://{host}:{bound}", err=True)
                await asyncio.Event().wait()
            finally:
                await runner.cleanup()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        logger.info("Query service stopped.")


def _fraction(ctx, param, value):
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise click.BadParameter(f"expected a number or a ratio like 579/735, got {value!r}")


@cli.command()
@click.option("--pages", default=735, show_default=True, type=click.IntRange(min=1))
@click.option("--requests", "n_requests", default=50_000, show_default=True, type=click.IntRange(min=0))
@click.option("--p", "p_success", default="579/735", show_default=True, callback=_fraction)
@click.option("--social-validity", default=10, show_default=True, type=click.IntRange(min=1))
@click.option("--pattern-validity", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--seeds", default=1, show_default=True, type=click.IntRange(min=1), help="Run seed, seed+1, ...")
@click.option("--exact-successes", default=None, type=click.IntRange(min=0))
@click.option("--refresh-mode", type=click.Choice(REFRESH_MODES), default="refresh", show_default=True)
@click.option("--uplift", default=None, type=click.FloatRange(0, 1), help="Top fraction of pages given manual patterns")
@click.option("--top", default=10, show_default=True, type=click.IntRange(min=0), help="Pages listed in the report")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--records-out", type=click.Path(dir_okay=False), help="JSON Lines of every request (first seed)")
@click.option("--summary-out", type=click.Path(dir_okay=False), help="Summary JSON document")
@click.pass_obj
def simulate(app: AppContext, pages, n_requests, p_success, social_validity, pattern_validity, seed, seeds,
             exact_successes, refresh_mode, uplift, top, jobs, records_out, summary_out):
    """Replay Zipf-distributed demand against the tiered extractor."""
    config = SimConfig(pages, n_requests, p_success, social_validity, pattern_validity, seed,
                       refresh_mode, exact_successes)
    results = sweep(config, list(range(seed, seed + seeds)), jobs)

    summaries = []
    for result in results:
        summary = report(result, top)
        if uplift is not None:
            summary["uplift"] = uplift_analysis(result, uplift).to_dict()
        summaries.append(summary)

    rates = [s["success_rate"] for s in summaries]
    document = summaries[0] if len(summaries) == 1 else {
        "seeds": [s["config"]["seed"] for s in summaries],
        "rates": rates,
        "mean_rate": sum(rates) / len(rates),
        "runs": summaries,
    }
    if records_out:
        write_records(results[0], records_out)
    if summary_out:
        Path(summary_out).write_text(json.dumps(document, indent=2), encoding="utf-8")

    if len(summaries) == 1:
        text = format_report(summaries[0])
        if uplift is not None:
            u = summaries[0]["uplift"]
            text += (f"\n\nManual patterns for top {uplift:.0%} of pages: {len(u['failed_pages'])} failing pages, "
                     f"rate {u['observed_rate']:.2%} -> {u['recomputed_rate']:.2%}")
    else:
        text = "\n".join(f"seed {s['config']['seed']}: {s['success_rate']:.2%}" for s in summaries)
        text += f"\nmean over {len(summaries)} seeds: {document['mean_rate']:.2%}"
    app.emit(document, text)


@cli.group()
def store():
    """Inspect and maintain the JSON Lines stores."""


def _pick_store(stores: Stores, name: str):
    return stores.social if name == "social" else stores.patterns


@store.command("list")
@click.option("--store", "name", type=click.Choice(["social", "patterns"]), default="social", show_default=True)
@click.pass_obj
def store_list(app: AppContext, name):
    records = _pick_store(app.stores(), name).records()
    rows = [r.to_dict() for r in records]
    if not rows:
        text = f"{name} store is empty"
    elif name == "social":
        text = "\n".join(f"{r['observed_at']}  {r['entity'] or '-':<24} {format_minor(r['amount_minor']):>10} "
                         f"{r['currency']}  {r['url']}" for r in rows)
    else:
        text = "\n".join(f"{r['confirmed_at']}  {r['url']}  {r['regex']}" for r in rows)
    app.emit(rows, text)


@store.command("compact")
@click.option("--store", "name", type=click.Choice(["social", "patterns", "all"]), default="all", show_default=True)
@click.pass_obj
def store_compact(app: AppContext, name):
    stores = app.stores()
    targets = ["social", "patterns"] if name == "all" else [name]
    dropped = {target: _pick_store(stores, target).compact() for target in targets}
    app.emit(dropped, "\n".join(f"{target}: {n} stale lines dropped" for target, n in dropped.items()))


if __name__ == "__main__":
    cli()
