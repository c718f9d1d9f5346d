/** Bilingual-ready string table; the deployed UI is Chinese-first. */

export type Locale = "en" | "zh";

const TABLE = {
  symbolPanelTitle: { en: "Symbol Association", zh: "符号联想" },
  themePlaceholder: {
    en: "Enter a design theme…",
    zh: "输入设计主题…",
  },
  suggest: { en: "Suggest", zh: "推荐" },
  libraryPanelTitle: { en: "Image Library", zh: "图像库" },
  searchPlaceholder: {
    en: "Search paintings…",
    zh: "搜索国画…",
  },
  searchButton: { en: "Search", zh: "搜索" },
  onlineMode: { en: "Online", zh: "在线" },
  boardPanelTitle: { en: "Moodboard Canvas", zh: "灵感画板" },
  generatePanelTitle: { en: "Image Generation", zh: "图像生成" },
  generateButton: { en: "Generate", zh: "生成" },
  freeTextPlaceholder: {
    en: "Describe your own idea…",
    zh: "描述你的想法…",
  },
  addCustomTag: { en: "+ tag", zh: "+ 标签" },
  customTagPrompt: { en: "New tag concept", zh: "新标签" },
  dragHint: {
    en: "Drag library results here to analyze them",
    zh: "将搜索结果拖到此处分析",
  },
  trayEmpty: {
    en: "Select tag chips to build a generation request",
    zh: "点击标签加入生成队列",
  },
  jobRunning: { en: "Generating…", zh: "生成中…" },
  jobFailed: { en: "Generation failed", zh: "生成失败" },
  collect: { en: "Collect", zh: "收藏" },
  collected: { en: "Collected", zh: "已收藏" },
  imagePromptLabel: { en: "Image prompt:", zh: "参考图：" },
  imagePromptNone: { en: "none", zh: "无" },
  poemLabel: { en: "Poem", zh: "题诗" },
} as const;

export type StringKey = keyof typeof TABLE;

let locale: Locale = "en";

export function setLocale(next: Locale): void {
  locale = next;
}

export function t(key: StringKey): string {
  return TABLE[key][locale];
}
