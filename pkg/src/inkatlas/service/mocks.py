"""Deterministic offline clients for demo mode and contract tests.

The mock text model answers by prompt shape (symbol requests, poem
requests, annotation stages, intention crafting); the mock image client
writes real placeholder PNG files so generated refs are servable.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path

from ..clients import OnlineResult

# minimal 1x1 gray PNG
PLACEHOLDER_PNG = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108000000003a7e9b55"
    "0000000a49444154789c636a0000008200813365f1a90000000049454e44ae426082"
)

_SYMBOL_POOL = [
    ("mountains", "Mountains embody permanence and the grandeur of nature."),
    ("water", "Flowing water stands for adaptability and continuity."),
    ("auspicious clouds", "Stylized clouds carry blessings and cosmic harmony."),
    ("birds", "Birds in flight express freedom and vitality."),
    ("deer", "The deer represents harmony between people and nature."),
    ("pine", "The pine endures winter: steadfastness and longevity."),
    ("plum blossom", "Blooming in snow, the plum blossom means perseverance."),
    ("lotus", "Rising unstained from mud, the lotus means purity."),
    ("crane", "The crane carries wishes of longevity and transcendence."),
    ("bamboo", "Bamboo bends without breaking: upright resilience."),
]

_TAG_LINE = re.compile(r"^- (?:cultural_symbol|emotion|composition|style|brushstroke|color_tone): (.+)$")


class MockTextModelClient:
    """Answers each pipeline prompt shape with plausible deterministic text."""

    def complete(self, prompt: str, image_ref: str | None = None) -> str:
        if "Suggest" in prompt and "cultural symbols" in prompt:
            return self._symbols(prompt)
        if "matching Chinese poems" in prompt:
            return json.dumps(
                {"poem": "In the thick woods a deer is seen at times.", "origin": "existing"},
                ensure_ascii=False,
            )
        if "Analyze the painting along these dimensions" in prompt:
            return self._annotation(image_ref or "")
        if "expert in traditional Chinese painting styles" in prompt:
            return json.dumps({"style": ["freehand ink landscape"]}, ensure_ascii=False)
        return self._intention(prompt)

    def _symbols(self, prompt: str) -> str:
        match = re.search(r"Suggest (\d+) cultural symbols", prompt)
        count = int(match.group(1)) if match else 5
        theme_match = re.search(r"design theme: (.+?)\.\n", prompt)
        theme = theme_match.group(1) if theme_match else "the theme"
        items = []
        for symbol, explanation in _SYMBOL_POOL[:count]:
            items.append(
                {
                    "symbol": symbol,
                    "explanation": f"{explanation} (suggested for {theme})",
                    "poem": {
                        "text": f"Of {symbol} the old poets sang, beneath a boundless sky.",
                        "attribution": "generated",
                    },
                }
            )
        return json.dumps(items, ensure_ascii=False)

    def _annotation(self, image_ref: str) -> str:
        seed = int(hashlib.sha256(image_ref.encode()).hexdigest()[:8], 16)
        symbol, explanation = _SYMBOL_POOL[seed % len(_SYMBOL_POOL)]
        return json.dumps(
            {
                "cultural_symbol": [{"name": symbol, "description": explanation}],
                "emotion": ["tranquility"],
                "composition": ["central composition"],
                "brushstroke": ["thick ink"],
                "color_tone": ["black ink"],
            },
            ensure_ascii=False,
        )

    def _intention(self, prompt: str) -> str:
        concepts = [m.group(1) for line in prompt.splitlines() if (m := _TAG_LINE.match(line))]
        idea = ""
        for line in prompt.splitlines():
            if line.startswith("Designer's own idea: "):
                idea = line.removeprefix("Designer's own idea: ")
        pieces = ", ".join(concepts) if concepts else "the selected elements"
        intention = (
            f"A Chinese-style scene weaving together {pieces} into one composition"
        )
        if idea:
            intention += f", guided by the idea: {idea}"
        return intention + "."


class MockImageGenClient:
    """Writes placeholder PNGs under images_dir/generated and returns refs."""

    def __init__(self, images_dir: str | Path):
        self._dir = Path(images_dir)
        self._counter = 0

    def generate(self, prompt: str, n: int, reference_image: str | None = None) -> list[str]:
        out = []
        digest = hashlib.sha256(prompt.encode()).hexdigest()[:8]
        for _ in range(n):
            ref = f"generated/{digest}_{self._counter:04d}.png"
            self._counter += 1
            path = self._dir / ref
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(PLACEHOLDER_PNG)
            out.append(ref)
        return out


class MockOnlineSearchClient:
    def search(self, query: str, limit: int) -> list[OnlineResult]:
        slug = re.sub(r"\W+", "-", query.strip().lower()).strip("-") or "query"
        return [
            OnlineResult(
                image_url=f"https://example.invalid/online/{slug}/{i}.jpg",
                title=f"{query} (online result {i + 1})",
                source_url=f"https://example.invalid/source/{slug}/{i}",
            )
            for i in range(min(limit, 8))
        ]
