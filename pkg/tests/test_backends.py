from __future__ import annotations

import json
import threading

import httpx
import pytest

from mieqa.backends import (
    CachedBackend,
    DecodingParams,
    GenerationRequest,
    RecordingBackend,
    RemoteBackend,
    RemoteConfig,
    StaticBackend,
    TranscriptBackend,
    cache_key,
    transcript_key,
)
from mieqa.errors import BackendExhaustedError, BackendFatalError, ConfigError
from mieqa.fixtures import write_png
from mieqa.model import ImageRef


@pytest.fixture()
def image(tmp_path):
    path = tmp_path / "img.png"
    write_png(path, seed=1)
    return ImageRef(path=str(path))


def req(text="hello", image=None, **decoding):
    return GenerationRequest(
        prompt_text=text, image=image, decoding=DecodingParams(**decoding)
    )


class TestKeys:
    def test_identical_requests_share_keys(self, image):
        assert transcript_key(req(image=image)) == transcript_key(req(image=image))
        assert cache_key("b", req()) == cache_key("b", req())

    def test_key_depends_on_image_bytes(self, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        write_png(a, seed=1)
        write_png(b, seed=2)
        assert transcript_key(req(image=ImageRef(str(a)))) != transcript_key(
            req(image=ImageRef(str(b)))
        )

    def test_key_depends_on_decoding(self):
        assert transcript_key(req(max_new_tokens=8)) != transcript_key(req(max_new_tokens=9))

    def test_cache_key_depends_on_backend_id(self):
        assert cache_key("a", req()) != cache_key("b", req())


class TestTranscriptBackend:
    def test_present_key_returns_mapped_text(self):
        backend = TranscriptBackend({transcript_key(req()): "mapped"})
        result = backend.generate(req())
        assert result.text == "mapped"
        assert result.cached is False

    def test_absent_key_returns_default(self):
        backend = TranscriptBackend({}, default="fallback")
        assert backend.generate(req()).text == "fallback"

    def test_absent_key_strict_raises(self):
        backend = TranscriptBackend({}, strict=True)
        with pytest.raises(BackendFatalError):
            backend.generate(req())

    def test_file_round_trip_via_recording(self, tmp_path):
        path = tmp_path / "transcript.jsonl"
        recorder = RecordingBackend(StaticBackend("answer", backend_id="static"), path)
        recorder.generate(req("q1"))
        recorder.generate(req("q2"))
        replay = TranscriptBackend(path, strict=True)
        assert replay.generate(req("q1")).text == "answer"
        assert replay.generate(req("q2")).text == "answer"


class TestCachedBackend:
    def test_hit_short_circuits_inner(self, tmp_path):
        inner = StaticBackend("x")
        backend = CachedBackend(inner, tmp_path / "cache")
        first = backend.generate(req())
        second = backend.generate(req())
        assert first.cached is False and second.cached is True
        assert inner.calls == 1
        assert backend.stats()["cache_hits"] == 1

    def test_different_images_make_two_calls(self, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        write_png(a, seed=1)
        write_png(b, seed=2)
        inner = StaticBackend("x")
        backend = CachedBackend(inner, tmp_path / "cache")
        backend.generate(req(image=ImageRef(str(a))))
        backend.generate(req(image=ImageRef(str(b))))
        assert inner.calls == 2

    def test_different_decoding_makes_two_calls(self, tmp_path):
        inner = StaticBackend("x")
        backend = CachedBackend(inner, tmp_path / "cache")
        backend.generate(req(max_new_tokens=4))
        backend.generate(req(max_new_tokens=5))
        assert inner.calls == 2

    def test_persisted_entries_reread_bit_identically(self, tmp_path):
        text = "answer with unicode é中 and\nnewlines"
        backend = CachedBackend(StaticBackend(text), tmp_path / "cache")
        backend.generate(req())
        fresh = CachedBackend(StaticBackend("other"), tmp_path / "cache")
        result = fresh.generate(req())
        assert result.text == text and result.cached is True

    def test_corrupt_entry_degrades_to_miss(self, tmp_path):
        inner = StaticBackend("x")
        backend = CachedBackend(inner, tmp_path / "cache")
        backend.generate(req())
        [entry] = list((tmp_path / "cache").rglob("*.json"))
        entry.write_text("{не json")
        again = backend.generate(req())
        assert again.cached is False
        assert backend.corrupt == 1
        assert inner.calls == 2

    def test_concurrent_generates_are_safe(self, tmp_path):
        backend = CachedBackend(StaticBackend("x"), tmp_path / "cache")
        errors = []

        def worker(i):
            try:
                backend.generate(req(f"prompt {i % 4}"))
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors


def _remote(transport, **overrides) -> RemoteBackend:
    config = RemoteConfig(
        endpoint="https://llm.test/v1",
        model="test-model",
        backoff_s=0.0,
        **overrides,
    )
    return RemoteBackend(config, transport=transport)


def _ok(text="fine"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})


class TestRemoteBackend:
    def test_happy_path_parses_completion(self):
        seen = {}

        def handler(request):
            seen["payload"] = json.loads(request.content)
            return _ok("done")

        backend = _remote(httpx.MockTransport(handler))
        assert backend.generate(req("ping")).text == "done"
        assert seen["payload"]["temperature"] == 0
        assert seen["payload"]["messages"][0]["content"] == "ping"

    def test_transient_5xx_then_success_retries_once(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) == 1:
                return httpx.Response(503)
            return _ok()

        backend = _remote(httpx.MockTransport(handler))
        assert backend.generate(req()).text == "fine"
        assert backend.retries == 1

    def test_exhausted_retries_raise_exhausted(self):
        backend = _remote(httpx.MockTransport(lambda r: httpx.Response(500)), max_attempts=3)
        with pytest.raises(BackendExhaustedError):
            backend.generate(req())

    def test_auth_failure_is_fatal_immediately(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(401)

        backend = _remote(httpx.MockTransport(handler))
        with pytest.raises(BackendFatalError):
            backend.generate(req())
        assert len(calls) == 1

    def test_stop_strings_pass_through(self):
        seen = {}

        def handler(request):
            seen["payload"] = json.loads(request.content)
            return _ok()

        backend = _remote(httpx.MockTransport(handler))
        backend.generate(req(stop=("\n\n",), max_new_tokens=12))
        assert seen["payload"]["stop"] == ["\n\n"]
        assert seen["payload"]["max_tokens"] == 12

    def test_image_becomes_base64_data_uri(self, image):
        seen = {}

        def handler(request):
            seen["payload"] = json.loads(request.content)
            return _ok()

        backend = _remote(httpx.MockTransport(handler))
        backend.generate(req(image=image))
        parts = seen["payload"]["messages"][0]["content"]
        assert parts[0] == {"type": "text", "text": "hello"}
        assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")

    def test_text_only_backend_rejects_image_requests(self, image):
        backend = _remote(httpx.MockTransport(lambda r: _ok()), supports_images=False)
        with pytest.raises(BackendFatalError, match="text-only"):
            backend.generate(req(image=image))

    def test_missing_credential_env_is_config_error(self, monkeypatch):
        monkeypatch.delenv("MIEQA_TEST_KEY", raising=False)
        with pytest.raises(ConfigError, match="MIEQA_TEST_KEY"):
            _remote(httpx.MockTransport(lambda r: _ok()), api_key_env="MIEQA_TEST_KEY")

    def test_in_flight_limiter_bounds_concurrency(self):
        import time

        lock = threading.Lock()
        state = {"current": 0, "peak": 0}

        def handler(request):
            with lock:
                state["current"] += 1
                state["peak"] = max(state["peak"], state["current"])
            time.sleep(0.02)
            with lock:
                state["current"] -= 1
            return _ok()

        backend = _remote(httpx.MockTransport(handler), max_in_flight=2)
        threads = [
            threading.Thread(target=lambda: backend.generate(req(f"p{i}")))
            for i in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert state["peak"] <= 2


def test_decoding_requires_positive_budget():
    with pytest.raises(ConfigError):
        DecodingParams(max_new_tokens=0)
