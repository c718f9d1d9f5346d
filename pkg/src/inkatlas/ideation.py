"""Symbol association, the tag -> design-intention -> images -> poem chain,
baseline direct prompting, and the evaluation-batch sampler.

The crafted path embeds every selected tag (plus knowledge-base expansions
of style and brushstroke terms) into the intention prompt before any
external call; the baseline path is a bare comma-joined tag list plus the
keyword "Chinese painting" and never touches the knowledge base.
"""

from __future__ import annotations

import csv
import json
import logging
import random
import shutil
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .annotator import KnowledgeBase
from .clients import (
    ClientError,
    ImageGenClient,
    ModelTranscript,
    RetryPolicy,
    TextModelClient,
    TranscriptLog,
    call_image_gen,
    call_text_model,
)
from .corpus import CorpusSnapshot, Tag, TagDimension
from .design_space import DesignSpaceCatalog

logger = logging.getLogger(__name__)

SYMBOL_ENDPOINT = "llm.symbols"
INTENTION_ENDPOINT = "llm.intention"
POEM_ENDPOINT = "llm.poem"
IMAGE_ENDPOINT = "imggen"


class IdeationError(Exception):
    pass


@dataclass(frozen=True)
class SymbolSuggestion:
    symbol: str
    explanation: str
    poem_text: str
    poem_attribution: str  # source work, or "generated"

    def __post_init__(self) -> None:
        if not self.symbol:
            raise IdeationError("suggestion symbol must be non-empty")
        if not self.poem_text:
            raise IdeationError(f"suggestion {self.symbol!r}: poem text must be non-empty")


@dataclass(frozen=True)
class TagSet:
    tags: tuple[Tag, ...]

    def __post_init__(self) -> None:
        seen = set()
        for tag in self.tags:
            key = (tag.dimension, tag.concept)
            if key in seen:
                raise IdeationError(f"duplicate tag {key}")
            seen.add(key)

    def concepts(self) -> tuple[str, ...]:
        return tuple(t.concept for t in self.tags)

    def __len__(self) -> int:
        return len(self.tags)

    def to_wire(self) -> list[dict]:
        return [{"dimension": t.dimension.value, "concept": t.concept} for t in self.tags]

    @classmethod
    def from_wire(cls, items: Sequence[Mapping]) -> "TagSet":
        return cls(tuple(Tag(TagDimension(i["dimension"]), i["concept"]) for i in items))


class GenerationMode(str, Enum):
    CRAFTED = "crafted"
    BASELINE = "baseline"


DEFAULT_IMAGE_COUNT = 3  # the rated sets ship three generated images each


@dataclass(frozen=True)
class GenerationRequest:
    tag_set: TagSet = TagSet(())
    free_text: str | None = None
    image_prompt: str | None = None  # record id or an uploaded/generated ref
    mode: GenerationMode = GenerationMode.CRAFTED
    image_count: int = DEFAULT_IMAGE_COUNT

    def __post_init__(self) -> None:
        if not self.tag_set.tags and not (self.free_text and self.free_text.strip()):
            raise IdeationError("request needs tags or free text")
        if self.image_count < 1:
            raise IdeationError("image_count must be >= 1")


class PoemStatus(str, Enum):
    EXISTING = "existing"
    GENERATED = "generated"
    UNAVAILABLE = "unavailable"


@dataclass(frozen=True)
class PoemResult:
    text: str
    status: PoemStatus


@dataclass(frozen=True)
class GenerationResult:
    design_intention: str  # crafted intention, or the raw baseline prompt
    images: tuple[str, ...]
    poem: PoemResult | None  # attached to the first image; None only without images
    transcript_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if bool(self.images) != (self.poem is not None):
            raise IdeationError("poem must be present exactly when images were produced")

    def to_wire(self) -> dict:
        return {
            "design_intention": self.design_intention,
            "images": list(self.images),
            "poem": None
            if self.poem is None
            else {"text": self.poem.text, "status": self.poem.status.value},
            "transcript_ids": list(self.transcript_ids),
        }


class _TranscriptScope:
    """Forwards appends to the shared log while remembering this chain's ids."""

    def __init__(self, log: TranscriptLog):
        self._log = log
        self.ids: list[str] = []

    def append(self, transcript: ModelTranscript) -> str:
        tid = self._log.append(transcript)
        self.ids.append(tid)
        return tid


def _extract_json(raw: str, opener: str, closer: str):
    start = raw.find(opener)
    end = raw.rfind(closer)
    if start == -1 or end == -1 or end <= start:
        raise IdeationError(f"no JSON payload in response: {raw[:120]!r}")
    try:
        return json.loads(raw[start : end + 1])
    except json.JSONDecodeError as exc:
        raise IdeationError(f"bad JSON payload: {exc}") from exc


def suggest_symbols(
    client: TextModelClient,
    log: TranscriptLog,
    theme: str,
    count: int,
    policy: RetryPolicy | None = None,
) -> list[SymbolSuggestion]:
    """Suggest cultural symbols for a design theme, each with an explanation
    and a literary reference (an existing poem where apt, else a generated
    one). Duplicate symbols in the raw response are dropped."""
    if not theme or not theme.strip():
        raise IdeationError("theme must be non-empty")
    if count < 1:
        raise IdeationError("count must be >= 1")
    prompt = (
        "You are an expert in Chinese culture and traditional Chinese painting.\n"
        f"Suggest {count} cultural symbols relevant to the design theme: {theme.strip()}.\n"
        "For each symbol give a short explanation of its cultural meaning and a "
        "literary reference from classical Chinese texts (quote an existing poem "
        "where one fits, otherwise compose a fitting one and attribute it as "
        '"generated").\n'
        "Respond with a single JSON array and nothing else: "
        '[{"symbol": "...", "explanation": "...", '
        '"poem": {"text": "...", "attribution": "..."}}]'
    )
    raw = call_text_model(client, log, SYMBOL_ENDPOINT, prompt, policy=policy)
    items = _extract_json(raw, "[", "]")
    if not isinstance(items, list):
        raise IdeationError("symbol response must be a JSON array")
    suggestions: list[SymbolSuggestion] = []
    seen: set[str] = set()
    for item in items:
        symbol = str(item.get("symbol", "")).strip()
        if not symbol or symbol.casefold() in seen:
            continue
        seen.add(symbol.casefold())
        poem = item.get("poem") or {}
        suggestions.append(
            SymbolSuggestion(
                symbol=symbol,
                explanation=str(item.get("explanation", "")).strip(),
                poem_text=str(poem.get("text", "")).strip() or "(no poem returned)",
                poem_attribution=str(poem.get("attribution", "generated")).strip() or "generated",
            )
        )
    if not suggestions:
        raise IdeationError("endpoint returned no usable symbol suggestions")
    return suggestions[:count]


def craft_design_intention(
    client: TextModelClient,
    log: TranscriptLog,
    request: GenerationRequest,
    kb: KnowledgeBase,
    policy: RetryPolicy | None = None,
) -> str:
    """Crafted-mode prompt: every selected tag concept, the user's free
    text, and knowledge-base visual characteristics for style/brushstroke
    terms, asking for one comprehensive design intention."""
    if request.mode is not GenerationMode.CRAFTED:
        raise IdeationError("craft_design_intention requires crafted mode")
    lines = [
        "You are an experienced Chinese-style visual designer.",
        "Craft one comprehensive design intention for an image that integrates "
        "all of the following elements.",
    ]
    if request.tag_set.tags:
        lines.append("Selected design keywords:")
        for tag in request.tag_set.tags:
            lines.append(f"- {tag.dimension.value}: {tag.concept}")
    if request.free_text and request.free_text.strip():
        lines.append(f"Designer's own idea: {request.free_text.strip()}")
    expansions = []
    for tag in request.tag_set.tags:
        if tag.dimension in (TagDimension.STYLE, TagDimension.BRUSHSTROKE):
            entry = kb.lookup(tag.concept)
            if entry is not None and entry.visual_characteristics:
                expansions.append(f"- {entry.term}: {entry.visual_characteristics}")
    if expansions:
        lines.append("Refine these Chinese painting terms with their precise visual characteristics:")
        lines.extend(expansions)
    lines.append(
        "Write a single cohesive paragraph describing the scene, its cultural "
        "symbols, composition, brushwork, color, and mood, suitable as a "
        "text-to-image prompt."
    )
    intention = call_text_model(client, log, INTENTION_ENDPOINT, "\n".join(lines), policy=policy)
    if not intention or not intention.strip():
        raise IdeationError("endpoint returned an empty design intention")
    return intention


def baseline_prompt(tag_set: TagSet) -> str:
    """Comparison condition: comma-joined tags plus the keyword, nothing else."""
    if not tag_set.tags:
        raise IdeationError("baseline prompt needs at least one tag")
    return ", ".join(tag_set.concepts()) + ", Chinese painting"


def generate_images(
    client: ImageGenClient,
    log: TranscriptLog,
    prompt_text: str,
    n: int = DEFAULT_IMAGE_COUNT,
    reference_image: str | None = None,
    policy: RetryPolicy | None = None,
) -> tuple[str, ...]:
    if n < 1:
        raise IdeationError("image count must be >= 1")
    refs = call_image_gen(
        client, log, IMAGE_ENDPOINT, prompt_text, n, reference_image=reference_image, policy=policy
    )
    if len(refs) != n:
        raise IdeationError(f"endpoint returned {len(refs)} images, expected {n}")
    return tuple(refs)


def attach_poem(
    client: TextModelClient,
    log: TranscriptLog,
    image_ref: str,
    policy: RetryPolicy | None = None,
) -> PoemResult:
    """Match or compose a poem for a generated image. Failure degrades to an
    'unavailable' poem rather than failing the chain."""
    prompt = (
        "You are an expert in matching Chinese poems to Chinese paintings.\n"
        f"Study the image at {image_ref} and its visual elements (cultural "
        "symbols, composition, color, brushwork, and emotion). Return an "
        "existing classical poem if one fits; otherwise compose a new one.\n"
        'Respond with a single JSON object and nothing else: {"poem": "...", '
        '"origin": "existing"|"generated"}'
    )
    try:
        raw = call_text_model(client, log, POEM_ENDPOINT, prompt, image_ref=image_ref, policy=policy)
    except ClientError as exc:
        logger.warning("poem attachment failed for %s: %s", image_ref, exc)
        return PoemResult(text="", status=PoemStatus.UNAVAILABLE)
    try:
        doc = _extract_json(raw, "{", "}")
        text = str(doc.get("poem", "")).strip()
        origin = str(doc.get("origin", "generated")).strip().lower()
    except IdeationError:
        # a bare poem is still a poem
        text, origin = raw.strip(), "generated"
    if not text:
        return PoemResult(text="", status=PoemStatus.UNAVAILABLE)
    status = PoemStatus.EXISTING if origin == "existing" else PoemStatus.GENERATED
    return PoemResult(text=text, status=status)


def run_generation_chain(
    text_client: TextModelClient,
    image_client: ImageGenClient,
    log: TranscriptLog,
    request: GenerationRequest,
    kb: KnowledgeBase,
    policy: RetryPolicy | None = None,
    resolve_image_ref: Callable[[str], str] | None = None,
) -> GenerationResult:
    """Sequential chain: intention (or baseline prompt) -> images -> poem."""
    scope = _TranscriptScope(log)
    if request.mode is GenerationMode.CRAFTED:
        intention = craft_design_intention(text_client, scope, request, kb, policy=policy)
    else:
        intention = baseline_prompt(request.tag_set)
    reference = None
    if request.image_prompt:
        reference = (
            resolve_image_ref(request.image_prompt) if resolve_image_ref else request.image_prompt
        )
    images = generate_images(
        image_client, scope, intention, n=request.image_count, reference_image=reference, policy=policy
    )
    poem = attach_poem(text_client, scope, images[0], policy=policy)
    return GenerationResult(
        design_intention=intention,
        images=images,
        poem=poem,
        transcript_ids=tuple(scope.ids),
    )


# -- evaluation batches --

MANDATORY_DIMENSIONS = (TagDimension.CULTURAL_SYMBOL, TagDimension.EMOTION, TagDimension.STYLE)
OPTIONAL_DIMENSIONS = (TagDimension.COLOR_TONE, TagDimension.BRUSHSTROKE, TagDimension.COMPOSITION)

# intention and poem are rated in the crafted condition only; image items in
# every generated condition (suffixed item.mode in the rating sheet)
CRAFTED_ONLY_ITEMS = ("intention_relevance", "poem_relevance")
PER_MODE_ITEMS = ("image_relevance", "image_preference", "image_aesthetics", "image_diversity")


def rated_items_for(modes: Sequence[str]) -> list[str]:
    items = [item for item in CRAFTED_ONLY_ITEMS if GenerationMode.CRAFTED.value in modes]
    for item in PER_MODE_ITEMS:
        items.extend(f"{item}.{mode}" for mode in modes)
    return items


def sample_eval_tagset(catalog: DesignSpaceCatalog, seed: int) -> TagSet:
    """Two uniform tags each from cultural symbols, emotions, and styles;
    color tone, brushstroke, and composition each join with probability 0.5,
    contributing one uniform tag. Bit-reproducible for a fixed seed."""
    rng = random.Random(seed)
    tags: list[Tag] = []
    for dim in MANDATORY_DIMENSIONS:
        concepts = catalog.concepts_for(dim)
        if len(concepts) < 2:
            raise IdeationError(f"catalog needs >= 2 concepts in {dim.value}, has {len(concepts)}")
        tags.extend(Tag(dim, c) for c in rng.sample(concepts, 2))
    for dim in OPTIONAL_DIMENSIONS:
        include = rng.random() < 0.5
        if include:
            concepts = catalog.concepts_for(dim)
            if concepts:
                tags.append(Tag(dim, rng.choice(concepts)))
    return TagSet(tuple(tags))


@dataclass(frozen=True)
class EvalSet:
    set_id: str
    tags: TagSet
    image_prompt: str | None
    outputs: Mapping[str, dict]  # mode value -> GenerationResult wire doc
    error: str | None = None

    def to_wire(self) -> dict:
        return {
            "set_id": self.set_id,
            "tags": self.tags.to_wire(),
            "image_prompt": self.image_prompt,
            "outputs": dict(self.outputs),
            "error": self.error,
        }

    @classmethod
    def from_wire(cls, doc: Mapping) -> "EvalSet":
        return cls(
            set_id=doc["set_id"],
            tags=TagSet.from_wire(doc["tags"]),
            image_prompt=doc.get("image_prompt"),
            outputs=dict(doc.get("outputs", {})),
            error=doc.get("error"),
        )


@dataclass
class EvalBundle:
    seed: int
    sets: list[EvalSet] = field(default_factory=list)
    raters: tuple[str, ...] = ("R1", "R2", "R3")

    def to_wire(self) -> dict:
        return {
            "seed": self.seed,
            "raters": list(self.raters),
            "sets": [s.to_wire() for s in self.sets],
        }

    @classmethod
    def from_wire(cls, doc: Mapping) -> "EvalBundle":
        return cls(
            seed=int(doc["seed"]),
            sets=[EvalSet.from_wire(s) for s in doc.get("sets", [])],
            raters=tuple(doc.get("raters", ("R1", "R2", "R3"))),
        )


def run_eval_batch(
    catalog: DesignSpaceCatalog,
    set_count: int,
    seed: int,
    text_client: TextModelClient,
    image_client: ImageGenClient,
    log: TranscriptLog,
    kb: KnowledgeBase,
    modes: Sequence[GenerationMode] = (GenerationMode.CRAFTED, GenerationMode.BASELINE),
    image_prompt_count: int = 5,
    corpus_snapshot: CorpusSnapshot | None = None,
    raters: Sequence[str] = ("R1", "R2", "R3"),
    policy: RetryPolicy | None = None,
) -> EvalBundle:
    """Produce `set_count` evaluation sets: sampled tags, then the full
    chain per requested mode. A failed set is marked and the batch goes on.

    image_prompt_count sets (chosen uniformly) carry an image prompt: the
    first corpus painting sharing at least one sampled tag, when a corpus
    snapshot is available.
    """
    if set_count < 1:
        raise IdeationError("set_count must be >= 1")
    master = random.Random(seed)
    set_seeds = [master.randrange(2**32) for _ in range(set_count)]
    prompt_sets = set(
        master.sample(range(set_count), min(image_prompt_count, set_count))
        if image_prompt_count > 0
        else []
    )
    bundle = EvalBundle(seed=seed, raters=tuple(raters))
    for i in range(set_count):
        set_id = f"set_{i + 1:02d}"
        try:
            tags = sample_eval_tagset(catalog, set_seeds[i])
        except IdeationError as exc:
            bundle.sets.append(EvalSet(set_id, TagSet(()), None, {}, error=str(exc)))
            continue
        image_prompt = None
        if i in prompt_sets and corpus_snapshot is not None:
            image_prompt = _first_record_sharing_a_tag(corpus_snapshot, tags)
        outputs: dict[str, dict] = {}
        error: str | None = None
        for mode in modes:
            request = GenerationRequest(
                tag_set=tags,
                image_prompt=image_prompt if mode is GenerationMode.CRAFTED else None,
                mode=mode,
            )
            try:
                result = run_generation_chain(
                    text_client, image_client, log, request, kb, policy=policy
                )
                outputs[mode.value] = result.to_wire()
            except (ClientError, IdeationError) as exc:
                error = f"{mode.value}: {exc}"
                logger.warning("eval %s failed in %s mode: %s", set_id, mode.value, exc)
        bundle.sets.append(EvalSet(set_id, tags, image_prompt, outputs, error=error))
    return bundle


def _first_record_sharing_a_tag(snapshot: CorpusSnapshot, tags: TagSet) -> str | None:
    wanted = {(t.dimension, t.concept) for t in tags.tags}
    for record in sorted(snapshot, key=lambda r: r.id):
        have = {
            (dim, t.concept)
            for dim in TagDimension
            for t in record.annotations.tags_for(dim)
        }
        if have & wanted:
            return record.id
    return None


def save_eval_bundle(
    bundle: EvalBundle,
    out_dir: str | Path,
    image_resolver: Callable[[str], Path | None] | None = None,
) -> Path:
    """Write the bundle document, per-set documents, copied image files when
    resolvable, and the rating-sheet skeleton."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bundle.json").write_text(
        json.dumps(bundle.to_wire(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    for eval_set in bundle.sets:
        set_dir = out / eval_set.set_id
        set_dir.mkdir(exist_ok=True)
        (set_dir / "set.json").write_text(
            json.dumps(eval_set.to_wire(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        if image_resolver is not None:
            for mode, output in eval_set.outputs.items():
                for idx, ref in enumerate(output.get("images", [])):
                    src = image_resolver(ref)
                    if src is not None and Path(src).exists():
                        shutil.copyfile(src, set_dir / f"{mode}_{idx}{Path(src).suffix or '.png'}")
    with open(out / "rating_sheet.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set_id", "item", "rater", "score"])
        for eval_set in bundle.sets:
            if not eval_set.outputs:
                continue
            for item in rated_items_for(sorted(eval_set.outputs)):
                for rater in bundle.raters:
                    writer.writerow([eval_set.set_id, item, rater, ""])
    return out


def load_eval_bundle(path: str | Path) -> EvalBundle:
    doc = json.loads((Path(path) / "bundle.json").read_text(encoding="utf-8"))
    return EvalBundle.from_wire(doc)
