/**
 * Client-side session state. Board contents are never cached here beyond
 * the latest server response: every mutation goes through the API and the
 * authoritative board always comes back from the server, so a reload
 * reconstructs the exact board from GET /boards/{id}.
 */

import type { ApiClient, Board, TagRef } from "./api.js";

type Listener = () => void;

export class SessionState {
  board: Board | null = null;
  boardToken = "";
  tray: TagRef[] = [];
  imagePrompt: string | null = null; // item source ref chosen from the collection
  highlighted: Set<string> = new Set();
  private listeners: Map<string, Listener[]> = new Map();

  constructor(
    public api: ApiClient,
    private storage: Pick<Storage, "getItem" | "setItem"> | null = null,
  ) {}

  on(event: "board" | "tray" | "highlight", fn: Listener): void {
    const list = this.listeners.get(event) ?? [];
    list.push(fn);
    this.listeners.set(event, list);
  }

  private emit(event: string): void {
    for (const fn of this.listeners.get(event) ?? []) fn();
  }

  /** Create a new board or reattach to the one saved in storage. */
  async ensureBoard(): Promise<Board> {
    if (this.board) return this.board;
    const savedId = this.storage?.getItem("inkatlas.board_id");
    const savedToken = this.storage?.getItem("inkatlas.board_token");
    if (savedId && savedToken) {
      try {
        const board = await this.api.getBoard(savedId, savedToken);
        this.boardToken = savedToken;
        this.setBoard(board);
        return board;
      } catch {
        // stale saved session: fall through and create a fresh board
      }
    }
    const created = await this.api.createBoard();
    this.boardToken = created.owner_token;
    this.storage?.setItem("inkatlas.board_id", created.board_id);
    this.storage?.setItem("inkatlas.board_token", created.owner_token);
    const board = await this.api.getBoard(created.board_id, created.owner_token);
    this.setBoard(board);
    return board;
  }

  setBoard(board: Board): void {
    this.board = board;
    this.emit("board");
  }

  addToTray(tag: TagRef): void {
    if (this.tray.some((t) => t.dimension === tag.dimension && t.concept === tag.concept)) return;
    this.tray.push(tag);
    this.emit("tray");
  }

  removeFromTray(tag: TagRef): void {
    this.tray = this.tray.filter(
      (t) => !(t.dimension === tag.dimension && t.concept === tag.concept),
    );
    this.emit("tray");
  }

  setHighlight(itemIds: string[]): void {
    this.highlighted = new Set(itemIds);
    this.emit("highlight");
  }
}
