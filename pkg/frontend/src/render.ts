// Canvas drawing for the top-down stage map. Pure geometry lives in
// geometry.ts; this file only pushes it through the 2D context.

import {
  arrowPoints,
  fitViewport,
  pathWorldPoints,
  volumeFootprint,
  watchLineTarget,
  worldToScreen,
} from "./geometry.js";
import type { ConsoleStore } from "./state.js";
import type { AvatarInfo } from "./types.js";

const WORLD_EXTENT_M = 12;

const COLORS = {
  background: "#10131a",
  gridLine: "#1d2330",
  volume: "rgba(80, 160, 255, 0.18)",
  volumeEdge: "#3f78c2",
  path: "#c9a036",
  watch: "#6fd38a",
  avatar: "#e8e3d4",
  avatarStale: "#6a675e",
  selected: "#ffb347",
  label: "#aab2c0",
};

function polygon(ctx: CanvasRenderingContext2D, pts: [number, number][]): void {
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
  ctx.closePath();
}

export function renderStage(canvas: HTMLCanvasElement, store: ConsoleStore): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  const v = fitViewport(canvas.width, canvas.height, WORLD_EXTENT_M);

  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  // Meter grid for scale.
  ctx.strokeStyle = COLORS.gridLine;
  ctx.lineWidth = 1;
  for (let m = -WORLD_EXTENT_M; m <= WORLD_EXTENT_M; m += 2) {
    const [x0, y0] = worldToScreen(v, m, -WORLD_EXTENT_M);
    const [x1, y1] = worldToScreen(v, m, WORLD_EXTENT_M);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
    const [x2, y2] = worldToScreen(v, -WORLD_EXTENT_M, m);
    const [x3, y3] = worldToScreen(v, WORLD_EXTENT_M, m);
    ctx.beginPath();
    ctx.moveTo(x2, y2);
    ctx.lineTo(x3, y3);
    ctx.stroke();
  }

  const snapshot = store.snapshot;
  if (!snapshot) return;
  const stale = store.connection !== "connected";
  ctx.globalAlpha = stale ? 0.45 : 1.0;

  const byId = (id: string): AvatarInfo | undefined =>
    snapshot.avatars.find((a) => a.id === id);

  // Acting volumes, placed by each avatar's current reference transform.
  for (const avatar of snapshot.avatars) {
    const vol = snapshot.stage.c_volumes[String(avatar.stream)];
    if (!vol) continue;
    const pts = volumeFootprint(vol, { pos: avatar.ref.pos, yaw: avatar.ref.yaw }).map(
      ([x, z]) => worldToScreen(v, x, z),
    );
    polygon(ctx, pts);
    ctx.fillStyle = COLORS.volume;
    ctx.fill();
    ctx.strokeStyle = COLORS.volumeEdge;
    ctx.stroke();
  }

  // Active paths.
  const grid = snapshot.stage.nav_grid;
  if (grid) {
    ctx.strokeStyle = COLORS.path;
    ctx.lineWidth = 2;
    for (const avatar of snapshot.avatars) {
      if (!avatar.path || avatar.path.done) continue;
      const pts = pathWorldPoints(grid, avatar.path.cells).map(([x, z]) =>
        worldToScreen(v, x, z),
      );
      if (pts.length < 2) continue;
      ctx.beginPath();
      ctx.moveTo(pts[0][0], pts[0][1]);
      for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
      ctx.stroke();
    }
  }

  // Watch-target lines.
  ctx.strokeStyle = COLORS.watch;
  ctx.lineWidth = 1;
  ctx.setLineDash([6, 4]);
  for (const avatar of snapshot.avatars) {
    const target = watchLineTarget(avatar, snapshot.stage, byId);
    if (!target) continue;
    const [x0, y0] = worldToScreen(v, avatar.position[0], avatar.position[2]);
    const [x1, y1] = worldToScreen(v, target[0], target[1]);
    ctx.beginPath();
    ctx.moveTo(x0, y0);
    ctx.lineTo(x1, y1);
    ctx.stroke();
  }
  ctx.setLineDash([]);

  // Avatars: arrow glyphs pointing along their heading.
  for (const avatar of snapshot.avatars) {
    const pts = arrowPoints(v, avatar.position[0], avatar.position[2], avatar.heading_yaw);
    polygon(ctx, pts);
    ctx.fillStyle = avatar.stale ? COLORS.avatarStale : COLORS.avatar;
    ctx.fill();
    if (avatar.id === store.selectedAvatar) {
      ctx.strokeStyle = COLORS.selected;
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    const [lx, ly] = worldToScreen(v, avatar.position[0], avatar.position[2]);
    ctx.fillStyle = COLORS.label;
    ctx.font = "12px sans-serif";
    ctx.fillText(avatar.id, lx + 10, ly - 10);
  }

  ctx.globalAlpha = 1.0;
}
