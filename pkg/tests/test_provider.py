import ast
import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from practiq import prompting
from practiq.corpus import ColumnRef
from practiq.errors import ProviderRefusal, RateLimited, TagMissing
from practiq.provider import MockProvider, ProviderRequest, Task, ask, load_prompt, make_provider, parse_tagged
from practiq.provider.live import LiveProvider


def test_parse_tagged_first_closing_span():
    assert parse_tagged("<result>a <result>b</result> c</result>", "result") == "b"
    assert parse_tagged("x <result> one </result> <result>two</result>", "result") == "one"


def test_parse_tagged_missing():
    with pytest.raises(TagMissing):
        parse_tagged("no tags here", "result")
    with pytest.raises(TagMissing):
        parse_tagged("</result> then <result>", "result")


@given(st.text(alphabet=st.characters(blacklist_characters="<>"), max_size=40))
def test_parse_tagged_recovers_body(body):
    assert parse_tagged(f"junk<scratch>s</scratch><result>{body}</result>tail", "result") == body.strip()


def test_every_task_has_a_prompt():
    for task in Task:
        assert load_prompt(task).strip()


def test_mock_synonyms_fallback():
    req = prompting.synonym_columns("", ColumnRef("t", "Foo"), "q", "SELECT Foo FROM t")
    items = ast.literal_eval(ask(MockProvider(), req))
    assert [i["column"] for i in items] == ["Foo (variant A)", "Foo (variant B)"]


def test_mock_is_deterministic():
    req = prompting.similar_values("", ColumnRef("t", "v"), "Paris", "q", "s")
    a, b = MockProvider(seed=3).complete(req), MockProvider(seed=3).complete(req)
    assert a == b


def test_mock_refuse_drops_tag():
    req = prompting.similar_values("", ColumnRef("t", "v"), "Paris", "q", "s")
    with pytest.raises(ProviderRefusal):
        ask(MockProvider(refuse=[Task.SIMILAR_VALUES]), req)


def test_make_provider_live_needs_env(monkeypatch):
    monkeypatch.delenv("PRACTIQ_LLM_ENDPOINT", raising=False)
    with pytest.raises(ProviderRefusal):
        make_provider("live")
    with pytest.raises(ValueError):
        make_provider("oracle")


def _request():
    return ProviderRequest(Task.PREDICT_SQL, "sys", (("user", "hi"),))


def _ok(text="<result>SELECT 1</result>", finish="stop"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}, "finish_reason": finish}], "usage": {"total_tokens": 3}})


def _live(handler, **kw):
    sleeps = []
    client = httpx.Client(transport=httpx.MockTransport(handler))
    provider = LiveProvider("http://llm.test/v1/chat", "m", key="k", client=client, sleep=sleeps.append, rpm=0, **kw)
    return provider, sleeps


def test_live_sends_wire_messages():
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers["authorization"]
        return _ok()

    provider, _ = _live(handler)
    resp = provider.complete(_request())
    assert resp.text == "<result>SELECT 1</result>" and resp.usage == {"total_tokens": 3}
    assert seen["body"]["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "hi"}]
    assert seen["body"]["temperature"] == 0.0 and seen["auth"] == "Bearer k"


def test_live_retries_429_then_succeeds():
    calls = iter([httpx.Response(429), httpx.Response(503), _ok()])
    provider, sleeps = _live(lambda r: next(calls))
    assert provider.complete(_request()).text.startswith("<result>")
    assert len(sleeps) == 2 and sleeps[1] >= sleeps[0] * 0.5


def test_live_gives_up_with_rate_limited():
    provider, sleeps = _live(lambda r: httpx.Response(429), max_retries=2)
    with pytest.raises(RateLimited):
        provider.complete(_request())
    assert len(sleeps) == 2


def test_live_content_filter_is_refusal():
    provider, _ = _live(lambda r: _ok(text=None, finish="content_filter"))
    with pytest.raises(ProviderRefusal):
        provider.complete(_request())


def test_live_client_error_not_retried():
    count = {"n": 0}

    def handler(request):
        count["n"] += 1
        return httpx.Response(400, text="bad request")

    provider, _ = _live(handler)
    with pytest.raises(ProviderRefusal):
        provider.complete(_request())
    assert count["n"] == 1


def test_live_malformed_payload():
    provider, _ = _live(lambda r: httpx.Response(200, json={"nothing": True}))
    with pytest.raises(ProviderRefusal):
        provider.complete(_request())
