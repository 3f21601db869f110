import logging

from aiohttp import web

from features.fetcher import PageUrl
from features.matcher import SiteQuery, match, match_all

logger = logging.getLogger(__name__)

STORES_KEY = web.AppKey("stores", object)
WEXTRACTOR_KEY = web.AppKey("wextractor", object)


async def handle_price(request):
    """GET /price?entity=<e>&site=<s>[&all=1]"""
    try:
        query = SiteQuery(request.query.get("entity", ""), request.query.get("site", ""))
    except ValueError as e:
        return web.json_response({"error": str(e)}, status=400)

    social = request.app[STORES_KEY].social
    if request.query.get("all") in ("1", "true", "yes"):
        answers = match_all(query, social)
        return web.json_response([a.to_dict() for a in answers], status=200 if answers else 404)

    answer = match(query, social)
    logger.info(f"price query {query.entity!r} @ {query.site!r}: {'hit' if not answer.empty else 'miss'}")
    return web.json_response(answer.to_dict(), status=404 if answer.empty else 200)


async def handle_extract(request):
    """POST /extract {"url": ..., "entity": ...}"""
    wextractor = request.app.get(WEXTRACTOR_KEY)
    if wextractor is None:
        return web.json_response({"error": "extraction is not enabled on this service"}, status=503)
    try:
        body = await request.json()
        url = PageUrl.parse(body.get("url", ""))
    except (ValueError, AttributeError) as e:
        return web.json_response({"error": f"bad request: {e}"}, status=400)
    if url.is_file:
        return web.json_response({"error": "file urls are not served"}, status=400)

    try:
        outcome = await wextractor.extract(url, body.get("entity") or None)
    except Exception:
        logger.exception(f"Extraction failed for {url}")
        return web.json_response({"error": "internal error"}, status=500)
    return web.json_response(outcome.to_dict())


def create_app(stores, wextractor=None) -> web.Application:
    app = web.Application()
    app[STORES_KEY] = stores
    if wextractor is not None:
        app[WEXTRACTOR_KEY] = wextractor
    app.router.add_get("/price", handle_price)
    app.router.add_post("/extract", handle_extract)
    return app


async def start_service(app: web.Application, host: str, port: int) -> web.AppRunner:
    runner = web.AppRunner(app)
    await runner.setup()
    site = web.TCPSite(runner, host, port)
    await site.start()
    bound = runner.addresses[0][1] if runner.addresses else port
    logger.info(f"Query service started at http://{host}:{bound}")
    return runner
