// The console's single connection to the engine. Exactly four outbound
// message types exist (axes, ownership, fire_cue, subscribe_state); all
// engine mutations go through them and nothing else. Sends while
// disconnected are dropped and reported so there is no offline queue.

import type { Axes } from "./input.js";
import type { ControlMessage, ServerMessage, StateSnapshot } from "./types.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: ((err: unknown) => void) | null;
  onmessage: ((event: { data: unknown }) => void) | null;
}

export type SocketFactory = (url: string) => WebSocketLike;

export interface SocketHandlers {
  onState: (snapshot: StateSnapshot) => void;
  onStatus: (status: "connecting" | "connected" | "disconnected") => void;
  onToast: (text: string) => void;
}

const RECONNECT_MS = 1000;

export class ConsoleSocket {
  private ws: WebSocketLike | null = null;
  private open = false;
  private closed = false;

  constructor(
    private url: string,
    private handlers: SocketHandlers,
    private factory: SocketFactory,
    private schedule: (fn: () => void, ms: number) => void = (fn, ms) => {
      setTimeout(fn, ms);
    },
  ) {}

  connect(): void {
    this.handlers.onStatus("connecting");
    const ws = this.factory(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.open = true;
      this.handlers.onStatus("connected");
      this.sendRaw({ type: "subscribe_state" });
    };
    ws.onmessage = (event) => {
      this.dispatch(String(event.data));
    };
    ws.onerror = () => {
      // onclose follows; nothing extra to do.
    };
    ws.onclose = () => {
      this.open = false;
      this.handlers.onStatus("disconnected");
      if (!this.closed) {
        this.schedule(() => this.connect(), RECONNECT_MS);
      }
    };
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }

  get isOpen(): boolean {
    return this.open;
  }

  private dispatch(text: string): void {
    let msg: ServerMessage;
    try {
      msg = JSON.parse(text) as ServerMessage;
    } catch {
      this.handlers.onToast("undecodable message from engine");
      return;
    }
    if (msg.type === "state") {
      const { type: _type, ...snapshot } = msg;
      this.handlers.onState(snapshot as StateSnapshot);
    } else if (msg.type === "error") {
      this.handlers.onToast(`engine error: ${msg.error}${msg.detail ? ` (${msg.detail})` : ""}`);
    }
    // ok / subscribed need no UI beyond the snapshots themselves.
  }

  private sendRaw(msg: ControlMessage): boolean {
    if (!this.open || this.ws === null) return false;
    this.ws.send(JSON.stringify(msg));
    return true;
  }

  sendAxes(avatar: string, axes: Axes): boolean {
    // Axes drop silently when disconnected; the banner shows the status.
    return this.sendRaw({ type: "axes", avatar, ...axes });
  }

  sendOwnership(avatar: string, channel: string, owner: string, weight?: number): boolean {
    const msg: ControlMessage =
      weight === undefined
        ? { type: "ownership", avatar, channel, owner }
        : { type: "ownership", avatar, channel, owner, weight };
    if (!this.sendRaw(msg)) {
      this.handlers.onToast("not connected: ownership change dropped");
      return false;
    }
    return true;
  }

  fireCue(id: string): boolean {
    if (!this.sendRaw({ type: "fire_cue", id })) {
      this.handlers.onToast(`not connected: cue ${id} not fired`);
      return false;
    }
    return true;
  }
}
