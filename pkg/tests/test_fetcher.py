import pytest
from aiohttp import web

from features.fetcher import CorpusIndex, Fetcher, PageUrl, Unavailable
from tests.conftest import FIXTURES, MANIFEST, ZINGERMAN_URL, file_url


@pytest.fixture
async def shop(aiohttp_server):
    hits = {"count": 0}

    async def product(request):
        hits["count"] += 1
        return web.Response(text='<html><body><span class="price">$19.99</span></body></html>',
                            content_type="text/html")

    async def missing(request):
        return web.Response(status=404, text="not here")

    async def blank(request):
        return web.Response(text="<html></html>", content_type="text/html")

    async def loop(request):
        raise web.HTTPFound("/loop")

    async def hop(request):
        raise web.HTTPFound("/product")

    app = web.Application()
    app.router.add_get("/product", product)
    app.router.add_get("/missing", missing)
    app.router.add_get("/blank", blank)
    app.router.add_get("/loop", loop)
    app.router.add_get("/hop", hop)
    server = await aiohttp_server(app)
    server.hits = hits
    return server


def url_of(server, path):
    return PageUrl.parse(str(server.make_url(path)))


def test_page_url_parsing():
    url = PageUrl.parse("https://WWW.Zingermans.com/Product.aspx?ProductID=A-ZDV")
    assert url.host == "www.zingermans.com"
    assert PageUrl.parse("file://fixtures/zingerman.html").host == "localhost"
    with pytest.raises(ValueError):
        PageUrl.parse("ftp://example.com/x")
    with pytest.raises(ValueError):
        PageUrl.parse("not a url")


async def test_fetch_returns_raw_html(shop):
    async with Fetcher() as fetcher:
        page = await fetcher.fetch_raw_html(url_of(shop, "/product"))
    assert "$19.99" in page.body
    assert page.source == "network"


async def test_non_2xx_is_unavailable(shop):
    async with Fetcher() as fetcher:
        with pytest.raises(Unavailable):
            await fetcher.fetch_raw_html(url_of(shop, "/missing"))
        assert not await fetcher.is_available(url_of(shop, "/missing"))


async def test_markup_without_text_is_empty_only_when_strict(shop):
    async with Fetcher(strict_empty=True) as fetcher:
        assert not await fetcher.is_available(url_of(shop, "/blank"))
    async with Fetcher() as fetcher:
        assert await fetcher.is_available(url_of(shop, "/blank"))


async def test_redirects_are_followed_but_bounded(shop):
    async with Fetcher() as fetcher:
        page = await fetcher.fetch_raw_html(url_of(shop, "/hop"))
        assert page.final_url.endswith("/product")
        assert not await fetcher.is_available(url_of(shop, "/loop"))


async def test_unreachable_host_is_unavailable():
    async with Fetcher(timeout=2) as fetcher:
        assert not await fetcher.is_available(PageUrl.parse("http://127.0.0.1:9/nothing"))


async def test_availability_body_is_reused_by_next_fetch(shop):
    url = url_of(shop, "/product")
    async with Fetcher() as fetcher:
        assert await fetcher.is_available(url)
        await fetcher.fetch_raw_html(url)
    assert shop.hits["count"] == 1


async def test_fetch_timestamps_are_monotone(shop):
    url = url_of(shop, "/product")
    async with Fetcher() as fetcher:
        first = await fetcher.fetch_raw_html(url)
        second = await fetcher.fetch_raw_html(url)
    assert second.fetched_at >= first.fetched_at


async def test_file_urls_read_from_disk():
    async with Fetcher() as fetcher:
        page = await fetcher.fetch_raw_html(file_url("zingerman.html"))
        assert page.source == "local-file"
        assert 'id="ctl00"' in page.body
        assert not await fetcher.is_available(PageUrl.parse((FIXTURES / "nope.html").as_uri()))


async def test_corpus_urls_are_served_from_the_manifest():
    corpus = CorpusIndex.from_manifest(MANIFEST)
    async with Fetcher(corpus=corpus) as fetcher:
        page = await fetcher.fetch_raw_html(PageUrl.parse(ZINGERMAN_URL))
    assert page.source == "local-file"
    assert "Lemon Cake" in page.body
