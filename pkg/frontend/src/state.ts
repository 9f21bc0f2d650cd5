// Console-side state: the latest engine snapshot, connection status and
// short-lived toasts. Rendering reads the most recent snapshot only; the
// console never extrapolates between snapshots.

import type { AvatarInfo, StateSnapshot } from "./types.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface Toast {
  text: string;
  expiresAt: number;
}

const TOAST_MS = 4000;

export class ConsoleStore {
  snapshot: StateSnapshot | null = null;
  connection: ConnectionStatus = "connecting";
  selectedAvatar: string | null = null;
  toasts: Toast[] = [];
  private listeners: (() => void)[] = [];

  onChange(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  applySnapshot(snapshot: StateSnapshot): void {
    // Replaced wholesale: stale sub-objects must never survive a push.
    this.snapshot = snapshot;
    if (
      this.selectedAvatar === null ||
      !snapshot.avatars.some((a) => a.id === this.selectedAvatar)
    ) {
      this.selectedAvatar = snapshot.avatars.length ? snapshot.avatars[0].id : null;
    }
    this.emit();
  }

  setConnection(status: ConnectionStatus): void {
    this.connection = status;
    this.emit();
  }

  selectAvatar(id: string): boolean {
    if (!this.snapshot?.avatars.some((a) => a.id === id)) return false;
    this.selectedAvatar = id;
    this.emit();
    return true;
  }

  avatar(id: string): AvatarInfo | undefined {
    return this.snapshot?.avatars.find((a) => a.id === id);
  }

  /** Exactly the latest snapshot's position; no client-side smoothing. */
  displayedPosition(id: string): number[] | null {
    const avatar = this.avatar(id);
    return avatar ? avatar.position : null;
  }

  fireCount(cueId: string): number {
    return this.snapshot?.cues.find((c) => c.id === cueId)?.fire_count ?? 0;
  }

  ownershipOf(avatarId: string): Record<string, string> {
    return this.snapshot?.ownership[avatarId] ?? {};
  }

  addToast(text: string, now: number = Date.now()): void {
    this.toasts.push({ text, expiresAt: now + TOAST_MS });
    this.emit();
  }

  pruneToasts(now: number = Date.now()): void {
    const before = this.toasts.length;
    this.toasts = this.toasts.filter((t) => t.expiresAt > now);
    if (this.toasts.length !== before) this.emit();
  }
}
