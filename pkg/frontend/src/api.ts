/**
 * Typed client for the backend HTTP surface. All board state lives on the
 * server; this client is the only mutation path the UI has.
 *
 * Stale-version conflicts (409) are retried once after a silent refetch of
 * the current board version; a second conflict propagates to the caller.
 */

export interface TagRef {
  dimension: string;
  concept: string;
}

export interface SymbolSuggestion {
  symbol: string;
  explanation: string;
  poem: { text: string; attribution: string };
}

export interface PaintingCard {
  id: string;
  image_url: string | null;
  image_ref: string;
  type: string;
  tags: Record<string, Array<string | { name: string; description?: string }>>;
  source: string;
  description?: string | null;
}

export interface SearchHit {
  record_id: string;
  score: number;
  matched_fields: Array<[string, string]>;
  painting: PaintingCard | null;
  external: { image_url: string; title: string; source_url: string } | null;
}

export interface BoardItem {
  item_id: string;
  source: { kind: "corpus" | "generated" | "online"; ref: string };
  x: number;
  y: number;
  width: number;
  height: number;
  system_tags: Record<string, Array<string | { name: string; description?: string }>>;
  custom_tags: TagRef[];
  collected: boolean;
}

export interface Board {
  board_id: string;
  version: number;
  items: BoardItem[];
}

export interface GenerationJob {
  job_id: string;
  status: "queued" | "running" | "done" | "failed";
  result: {
    design_intention: string;
    images: string[];
    poem: { text: string; status: string } | null;
  } | null;
  error: string | null;
}

export interface ErrorEnvelope {
  code: string;
  message: string;
  detail?: unknown;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public envelope: ErrorEnvelope,
  ) {
    super(envelope.message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (!resp.ok) {
      let envelope: ErrorEnvelope;
      try {
        envelope = (await resp.json()) as ErrorEnvelope;
      } catch {
        envelope = { code: "http_error", message: `HTTP ${resp.status}` };
      }
      throw new ApiError(resp.status, envelope);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown, headers?: Record<string, string>): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json", ...headers },
      body: JSON.stringify(body),
    });
  }

  suggestSymbols(theme: string, count = 5): Promise<{ suggestions: SymbolSuggestion[] }> {
    return this.post("/symbols/suggest", { theme, count });
  }

  search(
    q: string,
    opts: { mode?: "local" | "online"; dimension?: string; type?: string; limit?: number } = {},
  ): Promise<{ hits: SearchHit[] }> {
    const params = new URLSearchParams({ q });
    if (opts.mode) params.set("mode", opts.mode);
    if (opts.dimension) params.set("dimension", opts.dimension);
    if (opts.type) params.set("type", opts.type);
    if (opts.limit) params.set("limit", String(opts.limit));
    return this.request(`/search?${params.toString()}`);
  }

  getCatalog(): Promise<unknown> {
    return this.request("/catalog");
  }

  createBoard(): Promise<{ board_id: string; owner_token: string; version: number }> {
    return this.post("/boards", {});
  }

  getBoard(boardId: string, token: string): Promise<Board> {
    return this.request(`/boards/${boardId}`, {
      headers: { Authorization: `Bearer ${token}` },
    });
  }

  /** Run a versioned board mutation; on a stale version, refetch and retry once. */
  private async versioned(
    boardId: string,
    token: string,
    version: number,
    attempt: (version: number) => Promise<Board>,
  ): Promise<Board> {
    try {
      return await attempt(version);
    } catch (err) {
      if (err instanceof ApiError && err.envelope.code === "stale_version") {
        const fresh = await this.getBoard(boardId, token);
        return attempt(fresh.version);
      }
      throw err;
    }
  }

  addItem(
    boardId: string,
    token: string,
    version: number,
    source: BoardItem["source"],
    pos: { x: number; y: number; width?: number; height?: number },
  ): Promise<Board> {
    return this.versioned(boardId, token, version, (v) =>
      this.post(`/boards/${boardId}/items`, { version: v, source, ...pos }, {
        Authorization: `Bearer ${token}`,
      }),
    );
  }

  moveItem(
    boardId: string,
    token: string,
    version: number,
    itemId: string,
    x: number,
    y: number,
  ): Promise<Board> {
    return this.versioned(boardId, token, version, (v) =>
      this.request(`/boards/${boardId}`, {
        method: "PATCH",
        headers: { "content-type": "application/json", Authorization: `Bearer ${token}` },
        body: JSON.stringify({ version: v, ops: [{ op: "move_item", item_id: itemId, x, y }] }),
      }),
    );
  }

  setCollected(
    boardId: string,
    token: string,
    version: number,
    itemId: string,
    collected: boolean,
  ): Promise<Board> {
    return this.versioned(boardId, token, version, (v) =>
      this.request(`/boards/${boardId}`, {
        method: "PATCH",
        headers: { "content-type": "application/json", Authorization: `Bearer ${token}` },
        body: JSON.stringify({
          version: v,
          ops: [{ op: "set_collected", item_id: itemId, collected }],
        }),
      }),
    );
  }

  addCustomTag(
    boardId: string,
    token: string,
    version: number,
    itemId: string,
    tag: TagRef,
  ): Promise<Board> {
    return this.versioned(boardId, token, version, (v) =>
      this.post(`/boards/${boardId}/items/${itemId}/tags`, { version: v, ...tag }, {
        Authorization: `Bearer ${token}`,
      }),
    );
  }

  highlight(boardId: string, token: string, tag: TagRef): Promise<{ item_ids: string[] }> {
    const params = new URLSearchParams({ dimension: tag.dimension, concept: tag.concept });
    return this.request(`/boards/${boardId}/highlight?${params.toString()}`, {
      headers: { Authorization: `Bearer ${token}` },
    });
  }

  generate(body: {
    tags: TagRef[];
    free_text?: string | null;
    image_prompt?: string | null;
    mode?: "crafted" | "baseline";
    image_count?: number;
  }): Promise<{ job_id: string }> {
    return this.post("/generate", body);
  }

  getJob(jobId: string): Promise<GenerationJob> {
    return this.request(`/jobs/${jobId}`);
  }
}
