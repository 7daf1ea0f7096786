"""Strict parsers for the structured blocks models return."""

from __future__ import annotations

import re
from typing import Any

import yaml

_FENCE_RE = re.compile(r"^```[ \t]*([A-Za-z0-9_-]*)[ \t]*\n(.*?)^```[ \t]*$", re.S | re.M)

REFINABLE_FIELDS = ("docstring", "context_description", "instance_template")


class ParseError(ValueError):
    pass


def fenced_blocks(text: str) -> list[str]:
    """Bodies of all ``` fenced blocks tagged yaml (or untagged)."""
    return [body for tag, body in _FENCE_RE.findall(text) if tag.lower() in ("", "yaml", "yml")]


def _load_single(body: str) -> Any:
    try:
        docs = [d for d in yaml.safe_load_all(body) if d is not None]
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from exc
    if len(docs) != 1:
        raise ParseError(f"expected exactly one YAML document, found {len(docs)}")
    return docs[0]


def single_yaml_document(text: str, *, require_fence: bool = True) -> Any:
    blocks = fenced_blocks(text)
    if len(blocks) > 1:
        raise ParseError(f"expected exactly one fenced YAML block, found {len(blocks)}")
    if not blocks:
        if require_fence:
            raise ParseError("no fenced YAML block in response")
        return _load_single(text)
    return _load_single(blocks[0])


def parse_judge_response(text: str) -> tuple[int, str]:
    """Return ``(label, reasoning)`` from a helpfulness verdict."""
    doc = single_yaml_document(text, require_fence=False)
    if not isinstance(doc, dict) or "helpful" not in doc:
        raise ParseError("verdict lacks a 'helpful' key")
    helpful = doc["helpful"]
    if not isinstance(helpful, bool):
        raise ParseError(f"'helpful' must be true or false, got {helpful!r}")
    reasoning = doc.get("reasoning") or ""
    if not isinstance(reasoning, str):
        raise ParseError("'reasoning' must be text")
    return int(helpful), reasoning.strip()


def parse_subagent_document(text: str) -> dict[str, Any]:
    """Validate the one-tool YAML document and flatten it.

    Returns ``{name, signature, docstring, context_description}``.
    """
    doc = single_yaml_document(text)
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ParseError("document must hold exactly one tool under a single key")
    (name, body), = doc.items()
    if not isinstance(name, str) or not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", name):
        raise ParseError(f"tool name {name!r} is not a simple identifier")
    if not isinstance(body, dict):
        raise ParseError(f"{name}: tool body must be a mapping")
    unknown = set(body) - {"signature", "docstring", "arguments", "subagent"}
    if unknown:
        raise ParseError(f"{name}: unexpected keys {sorted(unknown)}")
    if body.get("subagent") is not True:
        raise ParseError(f"{name}: 'subagent: true' is required")
    signature = body.get("signature")
    if signature != f"{name} <context>":
        raise ParseError(f"{name}: signature must be '{name} <context>', got {signature!r}")
    docstring = body.get("docstring")
    if not isinstance(docstring, str) or not docstring.startswith("[subagent]"):
        raise ParseError(f"{name}: docstring must start with '[subagent]'")
    args = body.get("arguments")
    if not isinstance(args, list) or len(args) != 1 or not isinstance(args[0], dict):
        raise ParseError(f"{name}: exactly one argument is required")
    arg = args[0]
    if set(arg) - {"name", "type", "description", "required"}:
        raise ParseError(f"{name}: unexpected argument keys {sorted(set(arg))}")
    if arg.get("name") != "context" or arg.get("type") != "string" or arg.get("required") is not True:
        raise ParseError(f"{name}: the argument must be a required string named 'context'")
    description = arg.get("description")
    if not isinstance(description, str) or not description.strip():
        raise ParseError(f"{name}: the context argument needs a description")
    return {
        "name": name,
        "signature": signature,
        "docstring": docstring.strip(),
        "context_description": description.strip(),
    }


def parse_templates_document(text: str) -> tuple[str, str]:
    doc = single_yaml_document(text)
    if not isinstance(doc, dict) or set(doc) != {"system_template", "instance_template"}:
        raise ParseError("expected exactly system_template and instance_template")
    system, instance = doc["system_template"], doc["instance_template"]
    if not isinstance(system, str) or not isinstance(instance, str):
        raise ParseError("templates must be text")
    if "{{context}}" not in instance:
        raise ParseError("instance_template must contain {{context}}")
    return system, instance


def parse_updates(text: str) -> dict[str, str]:
    doc = single_yaml_document(text)
    if not isinstance(doc, dict) or set(doc) != {"updates"}:
        raise ParseError("response must have 'updates' as its only top-level key")
    updates = doc["updates"]
    if updates is None:
        updates = {}
    if not isinstance(updates, dict):
        raise ParseError("'updates' must be a mapping")
    unknown = set(updates) - set(REFINABLE_FIELDS)
    if unknown:
        raise ParseError(f"cannot update {sorted(unknown)}")
    for key, value in updates.items():
        if not isinstance(value, str) or not value.strip():
            raise ParseError(f"update for {key} must be non-empty text")
    return {k: updates[k] for k in REFINABLE_FIELDS if k in updates}
