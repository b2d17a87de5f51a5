import { describe, expect, it } from "vitest";

import { lonLatToTileF, TILE_SIZE, tileGrid } from "../src/mercator.js";

describe("lonLatToTileF", () => {
  it("matches the slippy-map reference tile for Tokyo at z10", () => {
    const { x, y } = lonLatToTileF(139.767, 35.6814, 10);
    expect(Math.floor(x)).toBe(909);
    expect(Math.floor(y)).toBe(403);
  });

  it("puts the equator/date-line corner at the tile origin", () => {
    const { x, y } = lonLatToTileF(-180, 0, 3);
    expect(Math.floor(x)).toBe(0);
    expect(Math.floor(y)).toBe(4);
  });
});

describe("tileGrid", () => {
  it("covers the viewport around the center", () => {
    const grid = tileGrid(0.5, 0.5, 8, 768, 512);
    expect(grid.length).toBeGreaterThan(0);
    const within = grid.filter(
      (t) => t.left < 768 && t.top < 512 && t.left + TILE_SIZE > 0 && t.top + TILE_SIZE > 0,
    );
    expect(within.length).toBe(grid.length);
    // some tile must cover the center pixel
    expect(
      grid.some(
        (t) => t.left <= 384 && 384 < t.left + TILE_SIZE && t.top <= 256 && 256 < t.top + TILE_SIZE,
      ),
    ).toBe(true);
  });

  it("never emits tiles outside the world", () => {
    const grid = tileGrid(-179.9, 85.0, 1, 1024, 1024);
    for (const t of grid) {
      expect(t.x).toBeGreaterThanOrEqual(0);
      expect(t.y).toBeGreaterThanOrEqual(0);
      expect(t.x).toBeLessThan(2);
      expect(t.y).toBeLessThan(2);
    }
  });

  it("recentring moves the grid", () => {
    const a = tileGrid(0.5, 0.5, 10, 512, 512).map((t) => `${t.x},${t.y}`);
    const b = tileGrid(5.5, 0.5, 10, 512, 512).map((t) => `${t.x},${t.y}`);
    expect(a).not.toEqual(b);
  });
});
