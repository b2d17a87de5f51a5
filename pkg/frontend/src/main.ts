import { formatEntropy, ReviewApi } from "./api.js";
import { QueueStore } from "./queue.js";
import { OverlayState, TILE_SIZE, ViewState } from "./viewer.js";

const api = new ReviewApi("");
const queue = new QueueStore(api);
const overlay = new OverlayState();
const view = new ViewState(api);

const $ = (id: string) => document.getElementById(id)!;

function renderBanner(): void {
  const banner = $("banner");
  if (queue.error) {
    banner.textContent = `service unreachable: ${queue.error} `;
    const retry = document.createElement("button");
    retry.textContent = "retry";
    retry.onclick = () => void reload();
    banner.appendChild(retry);
    banner.style.display = "block";
  } else {
    banner.style.display = "none";
  }
}

function renderQueue(): void {
  const list = $("queue");
  list.innerHTML = "";
  if (queue.isEmpty) {
    const empty = document.createElement("li");
    empty.className = "empty";
    empty.textContent = "no candidates";
    list.appendChild(empty);
    return;
  }
  for (const cand of queue.visible) {
    const row = document.createElement("li");
    row.className = cand.chip_id === queue.selected ? "selected" : "";
    const label = document.createElement("span");
    label.textContent = `${cand.chip_id}  [${cand.cell_id}]  H=${formatEntropy(cand.entropy)}  ${cand.decision}`;
    label.onclick = () => {
      const chosen = queue.select(cand.chip_id);
      if (chosen?.center_lon != null && chosen.center_lat != null) {
        view.centerOn(chosen.center_lon, chosen.center_lat);
        renderMap();
      }
      renderQueue();
    };
    row.appendChild(label);
    if (cand.decision === "pending") {
      for (const decision of ["failure", "clean"] as const) {
        const btn = document.createElement("button");
        btn.textContent = decision;
        btn.onclick = async (ev) => {
          ev.stopPropagation();
          await queue.mark(cand.chip_id, decision);
          renderBanner();
          renderQueue();
        };
        row.appendChild(btn);
      }
    }
    list.appendChild(row);
  }
}

function layerContainer(id: string): HTMLElement {
  const el = $(id);
  el.style.width = `${view.widthPx}px`;
  el.style.height = `${view.heightPx}px`;
  return el;
}

function renderLayer(container: HTMLElement, layer: string): void {
  container.innerHTML = "";
  for (const tile of view.layerTiles(layer)) {
    const img = document.createElement("img");
    img.src = tile.url;
    img.width = TILE_SIZE;
    img.height = TILE_SIZE;
    img.style.position = "absolute";
    img.style.left = `${tile.left}px`;
    img.style.top = `${tile.top}px`;
    container.appendChild(img);
  }
}

function renderMap(): void {
  renderLayer(layerContainer("base-layer"), "imagery");
  renderLayer(layerContainer("overlay-layer"), "prediction");
  applyOverlayStyle();
}

function applyOverlayStyle(): void {
  $("overlay-layer").style.opacity = String(overlay.effectiveOpacity);
  $("opacity-value").textContent = overlay.opacity.toFixed(2);
}

async function reload(): Promise<void> {
  await queue.load();
  renderBanner();
  renderQueue();
}

function init(): void {
  const slider = $("opacity") as HTMLInputElement;
  slider.value = String(overlay.opacity); // defaults to 0.3
  slider.oninput = () => {
    overlay.setOpacity(Number(slider.value));
    applyOverlayStyle(); // style only, tiles are not refetched
  };
  document.addEventListener("keydown", (ev) => {
    if (ev.key === "o") {
      overlay.toggle();
      applyOverlayStyle();
    }
  });
  renderMap();
  void reload();
}

init();
