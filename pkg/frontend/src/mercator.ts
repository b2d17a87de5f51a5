export const TILE_SIZE = 256;
export const MAX_MERCATOR_LAT = 85.05113;

/** Fractional slippy-map tile coordinates of a lon/lat at zoom z. */
export function lonLatToTileF(lon: number, lat: number, z: number): { x: number; y: number } {
  const clamped = Math.max(-MAX_MERCATOR_LAT, Math.min(MAX_MERCATOR_LAT, lat));
  const n = 2 ** z;
  const phi = (clamped * Math.PI) / 180;
  return {
    x: ((lon + 180) / 360) * n,
    y: ((1 - Math.log(Math.tan(phi) + 1 / Math.cos(phi)) / Math.PI) / 2) * n,
  };
}

export interface TilePlacement {
  z: number;
  x: number;
  y: number;
  /** CSS offset of the tile's top-left corner inside the viewport. */
  left: number;
  top: number;
}

/** Tiles needed to fill a widthPx-by-heightPx viewport centered on a point,
 * with their pixel placements. Tiles outside the world are skipped. */
export function tileGrid(
  centerLon: number,
  centerLat: number,
  z: number,
  widthPx: number,
  heightPx: number,
): TilePlacement[] {
  const n = 2 ** z;
  const center = lonLatToTileF(centerLon, centerLat, z);
  const placements: TilePlacement[] = [];
  const xMin = Math.floor(center.x - widthPx / 2 / TILE_SIZE);
  const xMax = Math.floor(center.x + widthPx / 2 / TILE_SIZE);
  const yMin = Math.floor(center.y - heightPx / 2 / TILE_SIZE);
  const yMax = Math.floor(center.y + heightPx / 2 / TILE_SIZE);
  for (let x = xMin; x <= xMax; x++) {
    for (let y = yMin; y <= yMax; y++) {
      if (x < 0 || y < 0 || x >= n || y >= n) continue;
      placements.push({
        z,
        x,
        y,
        left: Math.round(widthPx / 2 + (x - center.x) * TILE_SIZE),
        top: Math.round(heightPx / 2 + (y - center.y) * TILE_SIZE),
      });
    }
  }
  return placements;
}
