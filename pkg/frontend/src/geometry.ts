// Pure map geometry for the top-down stage view.
//
// World axes: x right, z up-stage; the canvas shows +x to the right and
// +z upward (so an avatar with yaw 0 points up the screen). Yaw turns
// +z toward +x.

import type { AvatarInfo, NavGridInfo, StageInfo, VolumeInfo } from "./types.js";

export interface Viewport {
  cx: number; // canvas pixel of world x = 0
  cy: number; // canvas pixel of world z = 0
  scale: number; // pixels per meter
}

export function fitViewport(width: number, height: number, extentMeters: number): Viewport {
  return {
    cx: width / 2,
    cy: height / 2,
    scale: Math.min(width, height) / (2 * extentMeters),
  };
}

export function worldToScreen(v: Viewport, x: number, z: number): [number, number] {
  return [v.cx + x * v.scale, v.cy - z * v.scale];
}

/** Triangle outline for an avatar glyph, tip along its heading. */
export function arrowPoints(
  v: Viewport,
  x: number,
  z: number,
  yaw: number,
  sizePx = 12,
): [number, number][] {
  const local: [number, number][] = [
    [0, 1.0], // tip (forward)
    [-0.6, -0.8],
    [0.6, -0.8],
  ];
  return local.map(([lx, lz]) => {
    const wx = x + (lx * Math.cos(yaw) + lz * Math.sin(yaw)) * (sizePx / v.scale);
    const wz = z + (-lx * Math.sin(yaw) + lz * Math.cos(yaw)) * (sizePx / v.scale);
    return worldToScreen(v, wx, wz);
  });
}

/**
 * Ground footprint of an acting volume as placed by an avatar's current
 * reference transform: the box corners rotated by yaw, then translated.
 */
export function volumeFootprint(
  vol: VolumeInfo,
  ref: { pos: number[]; yaw: number },
): [number, number][] {
  const corners: [number, number][] = [
    [vol.min[0], vol.min[2]],
    [vol.max[0], vol.min[2]],
    [vol.max[0], vol.max[2]],
    [vol.min[0], vol.max[2]],
  ];
  const cos = Math.cos(ref.yaw);
  const sin = Math.sin(ref.yaw);
  return corners.map(([x, z]) => [
    ref.pos[0] + cos * x + sin * z,
    ref.pos[2] + (-sin * x + cos * z),
  ]);
}

/** Physical-stage point carried into digital coordinates. */
export function mapAToB(stage: StageInfo, p: number[]): [number, number] {
  const yaw = (stage.a_to_b.yaw_deg * Math.PI) / 180;
  const [tx, , tz] = [
    stage.a_to_b.translation[0],
    stage.a_to_b.translation[1],
    stage.a_to_b.translation[2],
  ];
  return [
    tx + Math.cos(yaw) * p[0] + Math.sin(yaw) * p[2],
    tz + (-Math.sin(yaw) * p[0] + Math.cos(yaw) * p[2]),
  ];
}

export function cellCenter(grid: NavGridInfo, col: number, row: number): [number, number] {
  return [grid.origin[0] + col * grid.cell_size, grid.origin[2] + row * grid.cell_size];
}

export function pathWorldPoints(grid: NavGridInfo, cells: number[][]): [number, number][] {
  return cells.map(([c, r]) => cellCenter(grid, c, r));
}

/** Where an avatar's watch line ends, in world ground coordinates. */
export function watchLineTarget(
  avatar: AvatarInfo,
  stage: StageInfo,
  avatarById: (id: string) => AvatarInfo | undefined,
): [number, number] | null {
  const watch = avatar.watch;
  if (!watch) return null;
  if (watch.kind === "avatar" && watch.id) {
    const target = avatarById(watch.id);
    return target ? [target.position[0], target.position[2]] : null;
  }
  if (watch.kind === "performer" && watch.pos) {
    return mapAToB(stage, watch.pos);
  }
  if (watch.kind === "point" && watch.pos) {
    return [watch.pos[0], watch.pos[2]];
  }
  return null;
}
