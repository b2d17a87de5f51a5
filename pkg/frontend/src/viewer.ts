import type { ReviewApi } from "./api.js";
import { TILE_SIZE, tileGrid, type TilePlacement } from "./mercator.js";

/** Overlay visibility/opacity; toggling is an involution and is purely
 * client-side (styles change, tile sources do not). */
export class OverlayState {
  opacity = 0.3;
  visible = true;

  toggle(): void {
    this.visible = !this.visible;
  }

  setOpacity(value: number): void {
    this.opacity = Math.max(0, Math.min(1, value));
  }

  /** css opacity applied to the prediction layer. */
  get effectiveOpacity(): number {
    return this.visible ? this.opacity : 0;
  }
}

export interface TileImage extends TilePlacement {
  url: string;
  layer: string;
}

export class ViewState {
  centerLon = 0.5;
  centerLat = 0.5;
  zoom = 8;

  constructor(
    private api: ReviewApi,
    public widthPx = 768,
    public heightPx = 512,
  ) {}

  centerOn(lon: number, lat: number, zoom?: number): void {
    this.centerLon = lon;
    this.centerLat = lat;
    if (zoom !== undefined) this.zoom = zoom;
  }

  /** Tile images for one layer at the current view. */
  layerTiles(layer: string): TileImage[] {
    return tileGrid(
      this.centerLon,
      this.centerLat,
      this.zoom,
      this.widthPx,
      this.heightPx,
    ).map((p) => ({ ...p, layer, url: this.api.tileUrl(layer, p.z, p.x, p.y) }));
  }
}

export { TILE_SIZE };
