/**
 * Tag chips. Chip color is a pure function of the dimension; the table
 * below is the documented mapping. The four displayed dimensions render
 * directly on each board item; brushstroke and color tone stay behind a
 * "+" expander.
 */

import type { TagRef } from "./api.js";

export const DIMENSION_COLORS: Record<string, string> = {
  cultural_symbol: "#c0392b", // red
  emotion: "#d35400", // orange
  composition: "#27ae60", // green
  style: "#2980b9", // blue
  brushstroke: "#8e44ad", // purple
  color_tone: "#16a085", // teal
};

export const DISPLAYED_DIMENSIONS = ["cultural_symbol", "emotion", "composition", "style"];
export const COLLAPSED_DIMENSIONS = ["brushstroke", "color_tone"];

export function chipColor(dimension: string): string {
  return DIMENSION_COLORS[dimension] ?? "#7f8c8d";
}

export interface ChipHandlers {
  /** re-query the library with this concept */
  onSearch?: (tag: TagRef) => void;
  /** add this tag to the generation tray */
  onSelect?: (tag: TagRef) => void;
  /** highlight board items carrying this tag */
  onHighlight?: (tag: TagRef) => void;
}

export function conceptOf(entry: string | { name: string }): string {
  return typeof entry === "string" ? entry : entry.name;
}

export function tagsOf(
  tagMap: Record<string, Array<string | { name: string }>>,
  dimensions: string[],
): TagRef[] {
  const out: TagRef[] = [];
  for (const dimension of dimensions) {
    for (const entry of tagMap[dimension] ?? []) {
      out.push({ dimension, concept: conceptOf(entry) });
    }
  }
  return out;
}

export function buildChip(doc: Document, tag: TagRef, handlers: ChipHandlers = {}): HTMLElement {
  const chip = doc.createElement("span");
  chip.className = "chip";
  chip.dataset.dimension = tag.dimension;
  chip.dataset.concept = tag.concept;
  chip.style.backgroundColor = chipColor(tag.dimension);

  const label = doc.createElement("span");
  label.className = "chip-label";
  label.textContent = tag.concept;
  chip.appendChild(label);
  if (handlers.onHighlight) {
    label.addEventListener("click", () => handlers.onHighlight!(tag));
  }

  if (handlers.onSearch) {
    const search = doc.createElement("button");
    search.className = "chip-search";
    search.title = `search ${tag.concept}`;
    search.textContent = "⌕";
    search.addEventListener("click", (ev) => {
      ev.stopPropagation();
      handlers.onSearch!(tag);
    });
    chip.appendChild(search);
  }
  if (handlers.onSelect) {
    const select = doc.createElement("button");
    select.className = "chip-select";
    select.title = `use ${tag.concept} for generation`;
    select.textContent = "➕";
    select.addEventListener("click", (ev) => {
      ev.stopPropagation();
      handlers.onSelect!(tag);
    });
    chip.appendChild(select);
  }
  return chip;
}
