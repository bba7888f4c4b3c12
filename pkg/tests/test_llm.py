import ast
from pathlib import Path

import pytest

import mobsim
from mobsim.llm import (
    TEMPLATES,
    ChatCompletionAdapter,
    LlmConfig,
    LlmTransportError,
    LlmValidationError,
    PromptError,
    ScriptedMock,
    extract_json,
    make_adapter,
    render,
    validate,
)

ACT = {"activity": "meal", "category": "Cafe", "duration_minutes": 45}


class SentinelTransport:
    """Stands in for post_json; counts calls and replies with a canned chat completion."""

    def __init__(self, content='{"poi_id": "p1"}'):
        self.calls = []
        self.content = content

    def __call__(self, url, headers, body, timeout):
        self.calls.append((url, headers, body, timeout))
        return {"choices": [{"message": {"content": self.content}}]}


def test_valid_object_returned_unchanged():
    mock = ScriptedMock([ACT])
    assert mock.complete("what next?", "next_activity") == ACT
    assert mock.last_retry_count == 0


def test_fenced_reply_extracted():
    reply = 'Sure!\n```json\n{"poi_id": "p7"}\n```\nEnjoy.'
    assert extract_json(reply) == {"poi_id": "p7"}
    assert ScriptedMock([reply]).complete("pick", "destination") == {"poi_id": "p7"}


def test_bare_json_with_chatter():
    assert extract_json('I pick {"poi_id": "a"} because {it is close}') == {"poi_id": "a"}
    with pytest.raises(LlmValidationError):
        extract_json("no json here")


def test_missing_field_then_valid_retry_count_one():
    mock = ScriptedMock([{"activity": "meal", "category": "Cafe"}, ACT], max_retries=1)
    assert mock.complete("what next?", "next_activity") == ACT
    assert mock.last_retry_count == 1
    # the retry carries the rejected reply and a correction note
    retry = mock.transcripts[1]
    assert retry[-2]["role"] == "assistant"
    assert "duration_minutes" in retry[-1]["content"]


def test_retries_exhausted_raises_validation_error():
    mock = ScriptedMock([{"poi_id": 3}], max_retries=1)
    with pytest.raises(LlmValidationError):
        mock.complete("pick", "destination")
    assert mock.calls == 2


@pytest.mark.parametrize(
    "obj",
    [
        {"activity": "meal", "category": "Cafe", "duration_minutes": "45"},
        {"activity": "meal", "category": "Cafe", "duration_minutes": 45.0},
        {"activity": "meal", "category": "Cafe", "duration_minutes": True},
        {"activity": 1, "category": "Cafe", "duration_minutes": 45},
        {"category": "Cafe", "duration_minutes": 45},
        ["meal", "Cafe", 45],
    ],
)
def test_next_activity_contract_mutants_rejected(obj):
    with pytest.raises(LlmValidationError):
        validate(obj, "next_activity")


@pytest.mark.parametrize("obj", [{}, {"meal": []}, {"meal": "Cafe"}, {"meal": ["Cafe", 3]}, ["meal"]])
def test_activity_list_contract_mutants_rejected(obj):
    with pytest.raises(LlmValidationError):
        validate(obj, "activity_list")


def test_activity_list_contract_accepts_valid():
    obj = {"meal": ["Cafe", "Home"], "sleep": ["Home"]}
    assert validate(obj, "activity_list") == obj


def test_script_repeats_last_reply():
    mock = ScriptedMock([{"poi_id": "r1"}, {"poi_id": "r2"}])
    got = [mock.complete(f"call {i}", "destination")["poi_id"] for i in range(3)]
    assert got == ["r1", "r2", "r2"]
    assert len(mock.prompts) == mock.calls == 3
    assert mock.prompts[0] == "call 0"


def test_script_by_purpose():
    mock = ScriptedMock({"destination": [{"poi_id": "x"}], "next_activity": [ACT]})
    assert mock.complete("a", "next_activity") == ACT
    assert mock.complete("b", "destination") == {"poi_id": "x"}


def test_scripted_exception_is_transport_error():
    mock = ScriptedMock([RuntimeError("down")], max_retries=2)
    with pytest.raises(LlmTransportError):
        mock.complete("a", "destination")
    assert mock.calls == 3


def test_check_callback_rejects_content():
    def only_p1(obj):
        if obj["poi_id"] != "p1":
            raise LlmValidationError("not listed")

    mock = ScriptedMock([{"poi_id": "zz"}, {"poi_id": "p1"}])
    assert mock.complete("pick", "destination", check=only_p1) == {"poi_id": "p1"}


def test_templates_render_and_refuse_unfilled_slots():
    assert set(TEMPLATES) == {"persona_gen", "activity_list", "next_activity", "destination", "summary"}
    text = render("summary", level="day", agent_id="agent-1", events="sleep at Home")
    assert "agent-1" in text and "$" not in text
    with pytest.raises(PromptError):
        render("summary", level="day")
    for t in TEMPLATES.values():
        filled = t.render(**{s: "X" for s in t.slots})
        assert "$" not in filled


def test_empty_prompt_rejected():
    with pytest.raises(PromptError):
        ScriptedMock([ACT]).complete("   ", "next_activity")


def test_chat_adapter_request_shape(monkeypatch):
    monkeypatch.setenv("TEST_LLM_KEY", "sekret")
    transport = SentinelTransport()
    cfg = LlmConfig(endpoint_url="http://llm.invalid/v1/chat/completions", api_key_env="TEST_LLM_KEY", temperature=0.3)
    adapter = ChatCompletionAdapter(cfg, transport=transport)
    assert adapter.complete("pick one", "destination") == {"poi_id": "p1"}
    url, headers, body, timeout = transport.calls[0]
    assert url == cfg.endpoint_url
    assert headers["Authorization"] == "Bearer sekret"
    assert body["model"] == cfg.model_name and body["temperature"] == 0.3
    assert body["messages"][-1] == {"role": "user", "content": "pick one"}
    assert timeout == cfg.timeout


def test_chat_adapter_without_key_sends_no_auth(monkeypatch):
    monkeypatch.delenv("LLM_API_KEY", raising=False)
    transport = SentinelTransport()
    ChatCompletionAdapter(LlmConfig(endpoint_url="http://x.invalid"), transport).complete("a", "destination")
    assert "Authorization" not in transport.calls[0][1]


def test_malformed_completion_is_transport_error():
    adapter = ChatCompletionAdapter(LlmConfig(endpoint_url="http://x.invalid", max_retries=0), lambda *a: {"oops": 1})
    with pytest.raises(LlmTransportError):
        adapter.complete("a", "destination")


def test_make_adapter_selects_mock():
    assert isinstance(make_adapter({"mock_script": [ACT]}), ScriptedMock)
    assert isinstance(make_adapter({"endpoint_url": "http://x.invalid"}), ChatCompletionAdapter)


def test_only_llm_module_imports_network_libraries():
    network = {"httpx", "requests", "urllib", "urllib3", "http", "socket", "aiohttp"}
    offenders = []
    for path in Path(mobsim.__file__).parent.glob("*.py"):
        for node in ast.walk(ast.parse(path.read_text(encoding="utf-8"))):
            names = []
            if isinstance(node, ast.Import):
                names = [a.name for a in node.names]
            elif isinstance(node, ast.ImportFrom) and node.module:
                names = [node.module]
            if any(n.split(".")[0] in network for n in names) and path.name != "llm.py":
                offenders.append((path.name, names))
    assert offenders == []
