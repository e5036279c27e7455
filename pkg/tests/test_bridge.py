import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from simpctl.bridge import (
    PromptTemplate,
    SimplifierSpec,
    builtin_mocks,
    escape_line,
    run_simplifier,
    simplify_batch,
    strip_control_prefix,
    unescape_line,
)
from simpctl.control_tokens import CtVector, render_control_prefix
from simpctl.errors import BridgeError, ConfigError, ProtocolError

PREFIX = render_control_prefix(CtVector(1.0, 1.0, 1.0, 1.0))


def subprocess_spec(*command, **kwargs):
    return SimplifierSpec(mode="subprocess", command=tuple(command), **kwargs)


def mockserve_spec(name, **kwargs):
    return subprocess_spec(sys.executable, "-m", "simpctl.mockserve", name, **kwargs)


class TestControlPrefix:
    def test_strip_roundtrip(self):
        values, rest = strip_control_prefix(PREFIX + "hello world")
        assert rest == "hello world"
        assert values == {
            "DEPENDENCYTREEDEPTH": 1.0,
            "WORDRANK": 1.0,
            "REPLACEONLYLEVENSHTEIN": 1.0,
            "LENGTHRATIO": 1.0,
        }

    def test_untagged_passthrough(self):
        assert strip_control_prefix("plain text") == (None, "plain text")
        assert strip_control_prefix("<b>html</b>") == (None, "<b>html</b>")

    def test_malformed_prefix_rejected(self):
        with pytest.raises(ProtocolError, match="malformed"):
            strip_control_prefix("<DEPENDENCYTREEDEPTH_0.80> only one token")
        with pytest.raises(ProtocolError, match="malformed"):
            strip_control_prefix("<WORDRANK_0.80> wrong order first")


class TestBuiltinMocks:
    def test_identity_strips_tokens(self):
        assert builtin_mocks()["identity"](PREFIX + "hello world") == "hello world"

    def test_identity_leaves_untagged_alone(self):
        assert builtin_mocks()["identity"]("no tags here") == "no tags here"

    def test_truncate_to_lr(self):
        prefix = render_control_prefix(CtVector(1.0, 1.0, 1.0, 0.5))
        assert builtin_mocks()["truncate_to_lr"](prefix + "0123456789") == "01234"

    def test_truncate_requires_prefix(self):
        with pytest.raises(ProtocolError):
            builtin_mocks()["truncate_to_lr"]("untagged input")

    def test_lexical_sub(self):
        out = builtin_mocks()["lexical_sub"](PREFIX + "We utilize a tool")
        assert out == "We use a tool"


class TestLineEscaping:
    @pytest.mark.parametrize("text", ["plain", "two\nlines", "back\\slash", "mix\\n\nend"])
    def test_roundtrip(self, text):
        assert unescape_line(escape_line(text)) == text


class TestSubprocessProtocol:
    def test_identity_roundtrip_three_inputs(self):
        inputs = [PREFIX + "first one", PREFIX + "second one", "third untagged"]
        outputs = simplify_batch(mockserve_spec("identity"), inputs)
        assert outputs == ["first one", "second one", "third untagged"]

    def test_embedded_newline_roundtrip(self):
        spec = mockserve_spec("identity")
        (output,) = simplify_batch(spec, ["line with\nembedded newline"])
        assert output == "line with\nembedded newline"

    def test_line_count_mismatch(self):
        spec = subprocess_spec(
            sys.executable, "-c", "import sys; sys.stdin.read(); print('only'); print('two')"
        )
        with pytest.raises(ProtocolError, match="expected 3 .*got 2"):
            simplify_batch(spec, ["a", "b", "c"])

    def test_nonzero_exit_carries_stderr(self):
        spec = subprocess_spec(
            sys.executable, "-c", "import sys; print('boom', file=sys.stderr); sys.exit(3)"
        )
        with pytest.raises(BridgeError, match="status 3.*boom"):
            simplify_batch(spec, ["a"])

    def test_timeout_names_batch(self):
        spec = subprocess_spec(
            sys.executable, "-c", "import time; time.sleep(30)", timeout_s=0.5
        )
        with pytest.raises(BridgeError, match="batch 0 timed out"):
            simplify_batch(spec, ["a"])

    def test_batching_preserves_order(self):
        spec = mockserve_spec("identity", batch_size=2)
        inputs = [f"line {i}" for i in range(5)]
        assert simplify_batch(spec, inputs) == inputs

    def test_missing_command_rejected(self):
        with pytest.raises(ConfigError):
            SimplifierSpec(mode="subprocess")


class _EchoUppercaseHandler(BaseHTTPRequestHandler):
    requests_seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests_seen.append(body)
        content = body["messages"][0]["content"].upper()
        payload = json.dumps(
            {"choices": [{"message": {"role": "assistant", "content": content}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class _FlakyHandler(_EchoUppercaseHandler):
    requests_seen = []
    failures_left = [2]

    def do_POST(self):
        if self.failures_left[0] > 0:
            self.failures_left[0] -= 1
            self.send_response(503)
            self.end_headers()
            return
        super().do_POST()


@pytest.fixture
def stub_server():
    def start(handler):
        server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        return server, f"http://127.0.0.1:{server.server_port}/v1/chat"

    servers = []

    def factory(handler):
        server, url = start(handler)
        servers.append(server)
        return url

    yield factory
    for server in servers:
        server.shutdown()


def _template_file(tmp_path):
    path = tmp_path / "prompt.txt"
    path.write_text("Simplify: {{input}}", encoding="utf-8")
    return str(path)


class TestHttpBridge:
    def test_echo_uppercase_one_request_per_input(self, stub_server, tmp_path):
        _EchoUppercaseHandler.requests_seen = []
        url = stub_server(_EchoUppercaseHandler)
        spec = SimplifierSpec(
            mode="http",
            endpoint=url,
            model="test-model",
            prompt_template=_template_file(tmp_path),
            batch_size=2,
        )
        outputs = simplify_batch(spec, ["abc one", "def two", "ghi three"])
        assert outputs == ["SIMPLIFY: ABC ONE", "SIMPLIFY: DEF TWO", "SIMPLIFY: GHI THREE"]
        assert len(_EchoUppercaseHandler.requests_seen) == 3
        assert all(r["model"] == "test-model" for r in _EchoUppercaseHandler.requests_seen)

    def test_retries_recover_from_transient_503(self, stub_server, tmp_path):
        _FlakyHandler.requests_seen = []
        _FlakyHandler.failures_left = [2]
        url = stub_server(_FlakyHandler)
        spec = SimplifierSpec(
            mode="http",
            endpoint=url,
            model="m",
            prompt_template=_template_file(tmp_path),
            retries=3,
        )
        assert simplify_batch(spec, ["hello"]) == ["SIMPLIFY: HELLO"]

    def test_gives_up_after_retries(self, stub_server, tmp_path):
        _FlakyHandler.requests_seen = []
        _FlakyHandler.failures_left = [99]
        url = stub_server(_FlakyHandler)
        spec = SimplifierSpec(
            mode="http",
            endpoint=url,
            model="m",
            prompt_template=_template_file(tmp_path),
            retries=1,
        )
        with pytest.raises(BridgeError, match="2 attempts"):
            simplify_batch(spec, ["hello"])

    def test_params_passed_through(self, stub_server, tmp_path):
        _EchoUppercaseHandler.requests_seen = []
        url = stub_server(_EchoUppercaseHandler)
        spec = SimplifierSpec(
            mode="http",
            endpoint=url,
            model="m",
            prompt_template=_template_file(tmp_path),
            params={"temperature": 0.2},
        )
        simplify_batch(spec, ["x"])
        assert _EchoUppercaseHandler.requests_seen[0]["temperature"] == 0.2

    def test_missing_api_key_env(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SIMPCTL_TEST_KEY", raising=False)
        spec = SimplifierSpec(
            mode="http",
            endpoint="http://127.0.0.1:1/nowhere",
            prompt_template=_template_file(tmp_path),
            api_key_env="SIMPCTL_TEST_KEY",
        )
        with pytest.raises(ConfigError, match="SIMPCTL_TEST_KEY"):
            simplify_batch(spec, ["x"])


class TestPromptTemplate:
    def test_placeholder_required_exactly_once(self):
        with pytest.raises(ConfigError):
            PromptTemplate("no placeholder")
        with pytest.raises(ConfigError):
            PromptTemplate("{{input}} and {{input}}")

    def test_default_template_loads_and_renders(self):
        template = PromptTemplate.default()
        rendered = template.render("SOURCE SENTENCE")
        assert "SOURCE SENTENCE" in rendered
        assert "{{input}}" not in rendered

    def test_render(self):
        assert PromptTemplate("Q: {{input}}?").render("x") == "Q: x?"


class TestRunSimplifier:
    def test_callable_accepted_and_checked(self):
        assert run_simplifier(lambda lines: [l + "!" for l in lines], ["a"]) == ["a!"]
        with pytest.raises(ProtocolError):
            run_simplifier(lambda lines: [], ["a"])

    def test_spec_dispatch(self):
        spec = SimplifierSpec(mode="builtin", builtin="identity")
        assert run_simplifier(spec, [PREFIX + "text"]) == ["text"]

    def test_empty_inputs_rejected(self):
        with pytest.raises(ConfigError):
            run_simplifier(SimplifierSpec(mode="builtin", builtin="identity"), [])


class TestSpecConfig:
    def test_from_config(self):
        spec = SimplifierSpec.from_config(
            {"mode": "subprocess", "command": ["cat"], "batch_size": 4}
        )
        assert spec.command == ("cat",)
        assert spec.batch_size == 4

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown bridge config keys"):
            SimplifierSpec.from_config({"mode": "builtin", "builtin": "identity", "oops": 1})

    def test_unknown_builtin_rejected(self):
        with pytest.raises(ConfigError, match="unknown builtin"):
            SimplifierSpec(mode="builtin", builtin="nope")
