"""Prompt templates shipped as plain-text assets.

Placeholders are ``{{name}}`` where ``name`` comes from a fixed whitelist, so
the LaTeX braces that fill math prompts pass through untouched.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..errors import ConfigError, RenderError

TEMPLATE_IDS = ("cbu", "judge_default", "judge_proofgrader", "judge_uq", "variant_gen", "error_audit")

PLACEHOLDERS = ("original question", "candidate solution", "variant question")
_PLACEHOLDER_RE = re.compile(r"\{\{(" + "|".join(re.escape(p) for p in PLACEHOLDERS) + r")\}\}")

# rendered literal for the answer box in the cbu prompt
BOXED_LITERAL = r"\boxed{N}"

SENTINELS = {
    "original question": "<<ORIGINAL_QUESTION>>",
    "candidate solution": "<<CANDIDATE_SOLUTION>>",
    "variant question": "<<VARIANT_QUESTION>>",
}

GOLDEN_DIR = Path(__file__).with_name("goldens")


@dataclass(frozen=True)
class Template:
    id: str
    body: str

    @property
    def placeholders(self) -> tuple:
        seen = []
        for m in _PLACEHOLDER_RE.finditer(self.body):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return tuple(seen)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.body.encode("utf-8")).hexdigest()


def _read_asset(template_id: str) -> str:
    text = resources.files(__package__).joinpath("assets", f"{template_id}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def load(template_id: str) -> Template:
    if template_id not in TEMPLATE_IDS:
        raise ConfigError(f"unknown template {template_id!r}; expected one of {TEMPLATE_IDS}")
    return Template(template_id, _read_asset(template_id))


def render(template: Template, bindings: dict) -> str:
    needed = template.placeholders
    extra = sorted(set(bindings) - set(needed))
    if extra:
        raise RenderError(f"template {template.id!r} has no placeholder(s) {extra}")
    for name in needed:
        if name not in bindings:
            raise RenderError(f"template {template.id!r}: missing binding for {{{{{name}}}}}")
        if template.id == "cbu" and not bindings[name]:
            raise RenderError(f"template 'cbu': binding {name!r} must be non-empty")
    # one pass, so binding values are never re-scanned for placeholders
    return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], template.body)


def render_sentinel(template: Template) -> str:
    return render(template, {k: SENTINELS[k] for k in template.placeholders})


def golden_check(template: Template, reference) -> bool:
    path = Path(reference)
    if not path.is_file():
        raise ConfigError(f"golden file {path} not found")
    return render_sentinel(template).encode("utf-8") == path.read_bytes()


def golden_path(template_id: str) -> Path:
    return GOLDEN_DIR / f"{template_id}.golden.txt"


def shipped_digests() -> dict[str, str]:
    return {tid: load(tid).digest for tid in TEMPLATE_IDS}
