import json
import threading
import time
from math import sqrt

import httpx
import numpy as np
import pytest

from cbu.errors import BackendError, BackendTimeout, ConfigError, ProtocolError
from cbu.gateway import (BackendConfig, Gateway, GenerationRequest, HttpBackend, MockBackend, MockRule, MockScript,
                         SamplingParams, mock_uniform, prompt_hash)


def script(p, seed=0):
    return MockScript((MockRule("", p, "RIGHT", "WRONG"),), seed)


def batch(n, prompt="Solve it", backend="b"):
    return [GenerationRequest(backend, prompt, SamplingParams(), i) for i in range(n)]


class TestMock:
    @pytest.mark.parametrize("p, expect", [(1.0, "RIGHT"), (0.0, "WRONG")])
    def test_degenerate(self, p, expect):
        gw = Gateway()
        gw.register("b", MockBackend(script(p)))
        assert {g.completion for g in gw.generate_batch(batch(32))} == {expect}

    def test_half_matches_prng_stream(self):
        gw = Gateway()
        gw.register("b", MockBackend(script(0.5, seed=42)))
        reqs = batch(64)
        got = [g.completion == "RIGHT" for g in gw.generate_batch(reqs)]
        oracle = [mock_uniform(42, r.prompt_hash, r.index) < 0.5 for r in reqs]
        assert got == oracle
        k = sum(got)
        half_width = 2.576 * sqrt(64 * 0.25)
        assert abs(k - 32) <= half_width

    def test_rules_first_match(self):
        s = MockScript((MockRule("alpha", 1.0, "A", "-"), MockRule(lambda p: "beta" in p, 1.0, "B", "-"),
                        MockRule(".*", 1.0, "C", "-")))
        be = MockBackend(s)
        assert [be.complete(GenerationRequest("b", t)) for t in ("alpha beta", "beta", "gamma")] == ["A", "B", "C"]

    def test_needs_catch_all(self):
        with pytest.raises(ConfigError):
            MockScript((MockRule("x", 1.0, "a", "b"),))

    def test_script_round_trip(self, tmp_path):
        s = MockScript((MockRule("x", 0.25, "a", "b"), MockRule("", 0.5, "c", "d")), 9)
        (tmp_path / "s.json").write_text(json.dumps(s.to_dict()))
        assert MockScript.load(tmp_path / "s.json") == s

    def test_deterministic_across_runs(self):
        def run():
            gw = Gateway()
            gw.register("b", MockBackend(script(0.3, seed=5)))
            return [g.completion for g in gw.generate_batch(batch(200))]
        assert run() == run()


class TestBatch:
    def test_order_preserved(self):
        class Jitter:
            def complete(self, req):
                time.sleep(np.random.default_rng(req.index).random() * 0.005)
                return f"#{req.index}"
        gw = Gateway()
        gw.register("b", Jitter(), max_in_flight=8)
        assert [g.completion for g in gw.generate_batch(batch(64))] == [f"#{i}" for i in range(64)]

    def test_empty(self):
        gw = Gateway()
        gw.register("b", MockBackend(script(1.0)))
        assert gw.generate_batch([]) == []

    def test_fault_isolation(self):
        class Flaky:
            def complete(self, req):
                if req.index == 1:
                    raise BackendTimeout("slow", 4)
                return "ok"
        gw = Gateway()
        gw.register("b", Flaky())
        out = gw.generate_batch(batch(3))
        assert [g.ok for g in out] == [True, False, True]
        assert isinstance(out[1].error, BackendTimeout)

    def test_in_flight_bound(self):
        class Slow:
            def __init__(self):
                self.now = 0
                self.peak = 0
                self.lock = threading.Lock()

            def complete(self, req):
                with self.lock:
                    self.now += 1
                    self.peak = max(self.peak, self.now)
                time.sleep(0.002)
                with self.lock:
                    self.now -= 1
                return "x"
        slow = Slow()
        gw = Gateway()
        gw.register("b", slow, max_in_flight=3)
        gw.register("c", MockBackend(script(1.0)), max_in_flight=5)
        gw.generate_batch(batch(40) + batch(10, backend="c"))
        assert slow.peak <= 3 and gw.stats.peak_in_flight["b"] <= 3
        assert gw.stats.peak_in_flight["b"] >= 2

    def test_unknown_backend(self):
        with pytest.raises(ConfigError):
            Gateway().generate_batch(batch(1))

    def test_empty_prompt_is_per_item(self):
        gw = Gateway()
        gw.register("b", MockBackend(script(1.0)))
        out = gw.generate_batch([GenerationRequest("b", "", SamplingParams(), 0), *batch(1)])
        assert isinstance(out[0].error, ConfigError) and out[1].ok

    def test_cache_short_circuits(self):
        class Cache:
            def lookup(self, req):
                return "cached" if req.index % 2 == 0 else None
        gw = Gateway(cache=Cache())
        gw.register("b", MockBackend(script(1.0)))
        out = gw.generate_batch(batch(4))
        assert [g.completion for g in out] == ["cached", "RIGHT", "cached", "RIGHT"]
        assert gw.stats.calls == 2 and gw.stats.cache_hits == 2


def test_prompt_hash_depends_on_everything():
    s = SamplingParams()
    base = prompt_hash("cbu", "p", s)
    assert base != prompt_hash("judge_default", "p", s)
    assert base != prompt_hash("cbu", "p2", s)
    assert base != prompt_hash("cbu", "p", SamplingParams(temperature=0.5))
    # length prefixing: moving a boundary changes the hash
    assert prompt_hash("ab", "c", s) != prompt_hash("a", "bc", s)


# -- http -------------------------------------------------------------------
def http_backend(handler, **cfg):
    config = BackendConfig("http://llm.test/v1/chat/completions", "m", temperature=1.0, **cfg)
    sleeps = []
    be = HttpBackend(config, client=httpx.Client(transport=httpx.MockTransport(handler)), sleep=sleeps.append)
    return be, sleeps


def ok(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


class TestHttp:
    def test_payload_and_auth(self, monkeypatch):
        monkeypatch.setenv("CBU_GATEWAY_API_KEY", "sekret")
        seen = {}

        def handler(request):
            seen["body"] = json.loads(request.content)
            seen["auth"] = request.headers.get("authorization")
            return ok("hi")
        be, _ = http_backend(handler)
        req = GenerationRequest("h", "prompt!", SamplingParams(0.7, 128, seed=10), index=3)
        assert be.complete(req) == "hi"
        assert seen["auth"] == "Bearer sekret"
        assert seen["body"] == {"model": "m", "messages": [{"role": "user", "content": "prompt!"}],
                                "max_tokens": 128, "temperature": 0.7, "seed": 13}

    def test_retries_then_succeeds(self):
        codes = iter([429, 503, 200])

        def handler(request):
            code = next(codes)
            return ok("done") if code == 200 else httpx.Response(code)
        be, sleeps = http_backend(handler, backoff_base_ms=100)
        assert be.complete(GenerationRequest("h", "p")) == "done"
        assert len(sleeps) == 2
        assert 0 <= sleeps[0] <= 0.1 and 0 <= sleeps[1] <= 0.2

    def test_gives_up(self):
        be, sleeps = http_backend(lambda r: httpx.Response(500), max_attempts=3)
        with pytest.raises(ProtocolError) as ei:
            be.complete(GenerationRequest("h", "p"))
        assert ei.value.attempts == 3 and len(sleeps) == 2

    def test_client_error_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(401, text="bad key")
        be, _ = http_backend(handler)
        with pytest.raises(ProtocolError):
            be.complete(GenerationRequest("h", "p"))
        assert len(calls) == 1

    def test_timeout(self):
        def handler(request):
            raise httpx.ReadTimeout("slow", request=request)
        be, _ = http_backend(handler, max_attempts=2)
        with pytest.raises(BackendTimeout):
            be.complete(GenerationRequest("h", "p"))

    def test_transport_error(self):
        def handler(request):
            raise httpx.ConnectError("refused", request=request)
        be, _ = http_backend(handler, max_attempts=2)
        with pytest.raises(BackendError):
            be.complete(GenerationRequest("h", "p"))

    def test_malformed(self):
        be, _ = http_backend(lambda r: httpx.Response(200, json={"nope": 1}))
        with pytest.raises(ProtocolError, match="malformed"):
            be.complete(GenerationRequest("h", "p"))

    def test_through_gateway(self):
        be, _ = http_backend(lambda r: ok(json.loads(r.content)["messages"][0]["content"].upper()))
        gw = Gateway()
        gw.register("h", be, 4)
        assert [g.completion for g in gw.generate_batch(batch(3, "abc", "h"))] == ["ABC"] * 3
