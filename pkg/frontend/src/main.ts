// DOM wiring for the threshold explorer page.

import { httpFetcher } from "./api.js";
import { buildDiagramSvg } from "./diagram.js";
import { drawMesh } from "./render.js";
import { ThresholdExplorer } from "./state.js";

const canvas = document.getElementById("mesh") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const slider = document.getElementById("vf") as HTMLInputElement;
const vfLabel = document.getElementById("vf-value") as HTMLSpanElement;
const bettiLabel = document.getElementById("betti") as HTMLDivElement;
const statsLabel = document.getElementById("stats") as HTMLDivElement;
const banner = document.getElementById("stale-banner") as HTMLDivElement;
const aaToggle = document.getElementById("antialias") as HTMLInputElement;
const diagramHost = document.getElementById("diagram") as HTMLDivElement;
const metaLabel = document.getElementById("meta") as HTMLDivElement;

const explorer = new ThresholdExplorer(httpFetcher);

explorer.onChange((s) => {
  vfLabel.textContent = s.vf.toFixed(3);
  banner.style.display = s.stale ? "block" : "none";
  if (s.meta) {
    metaLabel.textContent =
      `${s.meta.geometry} | cell ${s.meta.cell_size} | s=${s.meta.samples} | ` +
      `grid ${s.meta.extents.join("x")}`;
  }
  if (s.betti) {
    const b2 = s.betti.b2 !== undefined ? ` B2=${s.betti.b2}` : "";
    bettiLabel.textContent = `B0=${s.betti.b0} B1=${s.betti.b1}${b2}`;
  }
  if (s.mesh) {
    if (s.mesh.dimension === 2) {
      drawMesh(ctx, s.mesh, canvas.width, canvas.height);
      statsLabel.textContent =
        `${s.mesh.base_cells} base cells | ${s.mesh.components} component(s) | ` +
        `${explorer.templateElementCount()} template element(s)`;
    } else {
      statsLabel.textContent =
        `3D mesh: ${(s.mesh as unknown as { cells: number }).cells} cells, ` +
        `${s.mesh.components} component(s) (stats only)`;
    }
  }
  diagramHost.innerHTML = buildDiagramSvg(s.diagram, 340, 1 - s.vf);
});

slider.addEventListener("input", () => {
  explorer.setThreshold(parseFloat(slider.value));
});

aaToggle.addEventListener("change", () => {
  explorer.setAntialias(aaToggle.checked);
});

explorer.init().catch((err) => {
  banner.style.display = "block";
  banner.textContent = `failed to reach server: ${err}`;
});
