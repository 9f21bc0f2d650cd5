import { describe, expect, it } from "vitest";

import {
  arrowPoints,
  cellCenter,
  fitViewport,
  mapAToB,
  pathWorldPoints,
  volumeFootprint,
  watchLineTarget,
  worldToScreen,
} from "../src/geometry.js";
import { snapshot } from "./state.test.js";

const v = fitViewport(800, 600, 10); // 30 px per meter, center (400, 300)

describe("world/screen mapping", () => {
  it("puts the origin at the canvas center", () => {
    expect(worldToScreen(v, 0, 0)).toEqual([400, 300]);
  });

  it("maps +x right and +z (up-stage) up", () => {
    const [x, y] = worldToScreen(v, 2, 3);
    expect(x).toBeGreaterThan(400);
    expect(y).toBeLessThan(300);
  });

  it("scales by the smaller canvas dimension", () => {
    expect(v.scale).toBe(30);
  });
});

describe("arrow glyphs", () => {
  it("points up-stage at yaw 0", () => {
    const [tip, left, right] = arrowPoints(v, 0, 0, 0);
    expect(tip[0]).toBeCloseTo(400);
    expect(tip[1]).toBeLessThan(left[1]);
    expect(tip[1]).toBeLessThan(right[1]);
  });

  it("points right at yaw +90 degrees", () => {
    const [tip] = arrowPoints(v, 0, 0, Math.PI / 2);
    expect(tip[0]).toBeGreaterThan(400);
    expect(tip[1]).toBeCloseTo(300, 6);
  });
});

describe("volume footprints", () => {
  it("translates an axis-aligned box", () => {
    const pts = volumeFootprint(
      { min: [-1, 0, -1], max: [1, 2, 1] },
      { pos: [5, 0, -2], yaw: 0 },
    );
    expect(pts).toEqual([
      [4, -3],
      [6, -3],
      [6, -1],
      [4, -1],
    ]);
  });

  it("rotates corners by the reference yaw", () => {
    const pts = volumeFootprint(
      { min: [-1, 0, -1], max: [1, 2, 1] },
      { pos: [0, 0, 0], yaw: Math.PI / 2 },
    );
    // (x=1, z=1) under yaw 90: x' = z = 1, z' = -x = -1.
    expect(pts[2][0]).toBeCloseTo(1);
    expect(pts[2][1]).toBeCloseTo(-1);
  });
});

describe("stage placement and paths", () => {
  it("maps physical-stage points through translation", () => {
    const stage = snapshot().stage;
    expect(mapAToB(stage, [1, 0, 2])).toEqual([1, -1]);
  });

  it("maps grid cells to world centers", () => {
    const grid = { cols: 20, rows: 12, cell_size: 0.75, origin: [-7.125, 0, -4.125] };
    expect(cellCenter(grid, 0, 0)).toEqual([-7.125, -4.125]);
    expect(cellCenter(grid, 2, 1)).toEqual([-7.125 + 1.5, -4.125 + 0.75]);
    expect(pathWorldPoints(grid, [[0, 0], [1, 0]])).toHaveLength(2);
  });
});

describe("watch lines", () => {
  const snap = snapshot();
  const byId = (id: string) => snap.avatars.find((a) => a.id === id);

  it("targets another avatar's exact snapshot position", () => {
    const end = watchLineTarget(snap.avatars[1], snap.stage, byId);
    expect(end).toEqual([1.25, -2.5]);
  });

  it("maps performer targets through the stage placement", () => {
    const watcher = {
      ...snap.avatars[0],
      watch: { kind: "performer" as const, pos: [2, 0, 0] },
    };
    expect(watchLineTarget(watcher, snap.stage, byId)).toEqual([2, -3]);
  });

  it("returns null without a watch target", () => {
    expect(watchLineTarget(snap.avatars[0], snap.stage, byId)).toBeNull();
  });
});
