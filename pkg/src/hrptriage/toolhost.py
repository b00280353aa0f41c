"""Local tools behind a uniform request/response protocol.

Two tools ship in-repo: "vectorstore" (hybrid search over a loaded
snapshot) and "summary" (extractive snippet condenser). Both can be
served over line-delimited JSON on stdio — one canonical-JSON request per
line, one response per line, fields {id, tool, method, params} in and
{id, result | error} out — or called in-process through the same
dispatch, which is what the agents do. The adapters add no logic: a
vectorstore search through the protocol returns byte-identical results to
the in-process retrieval call.

Error codes follow JSON-RPC conventions (-32700 parse error, -32601
method not found, -32000 internal) without claiming full compliance.
A malformed line never terminates the server loop, and nothing in this
module opens a network connection.
"""

from __future__ import annotations

import json
from typing import Callable, IO, Mapping

from .canon import canonical_json
from .errors import ToolFailure
from .retrieval import (
    QueryObject,
    RankedSnippet,
    SearchIndex,
    hybrid_search,
    sentence_spans,
    tokenize,
)

PROTOCOL_SCHEMA_VERSION = 1

PARSE_ERROR = -32700
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32000

ToolMethod = Callable[[Mapping], dict]
ToolRegistry = dict[str, dict[str, ToolMethod]]


# ---------------------------------------------------------------------------
# Tools
# ---------------------------------------------------------------------------


def vectorstore_tool(index: SearchIndex) -> dict[str, ToolMethod]:
    def search(params: Mapping) -> dict:
        query = QueryObject.from_dict(params)
        ranked = hybrid_search(index, query)
        return {"results": [r.to_dict() for r in ranked]}

    return {"search": search}


def condense(snippet_texts: list[str], query: str, max_chars: int) -> str:
    """Extractive condenser: verbatim sentences ranked by query-term overlap.

    Sentences keep their source order among equals and are joined by a
    single space; output stops at the last whole sentence within max_chars.
    """
    if max_chars < 80:
        raise ValueError("max_chars must be >= 80")
    query_terms = set(tokenize(query))
    candidates: list[tuple[int, int, str]] = []  # (-overlap, arrival, sentence)
    arrival = 0
    for text in snippet_texts:
        for start, end in sentence_spans(text):
            sentence = text[start:end].strip()
            if not sentence:
                continue
            overlap = len(query_terms & set(tokenize(sentence)))
            candidates.append((-overlap, arrival, sentence))
            arrival += 1
    candidates.sort()
    picked: list[str] = []
    used = 0
    for _neg, _arrival, sentence in candidates:
        extra = len(sentence) + (1 if picked else 0)
        if used + extra > max_chars:
            break
        picked.append(sentence)
        used += extra
    return " ".join(picked)


def summary_tool() -> dict[str, ToolMethod]:
    def condense_method(params: Mapping) -> dict:
        return {
            "summary": condense(
                list(params.get("snippet_texts", [])),
                str(params.get("query", "")),
                int(params.get("max_chars", 80)),
            )
        }

    return {"condense": condense_method}


def default_registry(index: SearchIndex) -> ToolRegistry:
    return {"vectorstore": vectorstore_tool(index), "summary": summary_tool()}


# ---------------------------------------------------------------------------
# Dispatch (shared by stdio server and in-process client)
# ---------------------------------------------------------------------------


def dispatch(registry: ToolRegistry, request: Mapping) -> dict:
    request_id = request.get("id")
    tool_name = request.get("tool")
    method_name = request.get("method")
    tool = registry.get(tool_name or "")
    if tool is None or method_name not in tool:
        return {
            "id": request_id,
            "error": {
                "code": METHOD_NOT_FOUND,
                "message": f"unknown tool/method {tool_name}.{method_name}",
            },
        }
    params = request.get("params") or {}
    if not isinstance(params, Mapping):
        return {
            "id": request_id,
            "error": {"code": INVALID_PARAMS, "message": "params must be an object"},
        }
    try:
        result = tool[method_name](params)
    except (ValueError, KeyError, TypeError) as exc:
        return {
            "id": request_id,
            "error": {"code": INVALID_PARAMS, "message": str(exc)},
        }
    except Exception as exc:  # the loop must survive anything a tool throws
        return {
            "id": request_id,
            "error": {"code": INTERNAL_ERROR, "message": str(exc)},
        }
    return {"id": request_id, "result": result}


def serve(registry: ToolRegistry, in_stream: IO[str], out_stream: IO[str]) -> None:
    """Blocking stdio server: handshake line, then one response per request."""
    hello = {
        "hello": {
            "schema_version": PROTOCOL_SCHEMA_VERSION,
            "tools": sorted(registry),
        }
    }
    out_stream.write(canonical_json(hello) + "\n")
    out_stream.flush()
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            response = {"id": None, "error": {"code": PARSE_ERROR, "message": str(exc)}}
        else:
            response = dispatch(registry, request)
        out_stream.write(canonical_json(response) + "\n")
        out_stream.flush()


# ---------------------------------------------------------------------------
# Clients
# ---------------------------------------------------------------------------


class InProcessToolClient:
    """Same dispatch path as the stdio server, minus the transport."""

    def __init__(self, registry: ToolRegistry):
        self._registry = registry
        self._counter = 0

    def call(self, tool: str, method: str, params: Mapping) -> dict:
        self._counter += 1
        response = dispatch(
            self._registry,
            {"id": str(self._counter), "tool": tool, "method": method, "params": params},
        )
        if "error" in response:
            raise ToolFailure(
                f"{tool}.{method}: {response['error']['code']} {response['error']['message']}"
            )
        return response["result"]


class VectorStoreClient:
    """The agents' handle on the vector store tool."""

    def __init__(self, client: InProcessToolClient):
        self._client = client

    def search(self, query: QueryObject) -> list[RankedSnippet]:
        result = self._client.call("vectorstore", "search", query.to_dict())
        return [RankedSnippet.from_dict(r) for r in result["results"]]
