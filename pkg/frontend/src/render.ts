// Canvas mesh rendering: base-grid quads in one style, template children
// (pinch repairs and bridges) highlighted in another.

import { MeshPayload } from "./api.js";

export interface Transform {
  scale: number;
  tx: number;
  ty: number;
}

export const BASE_FILL = "#9ecae8";
export const TEMPLATE_FILL = "#e4572e";
export const EDGE_STROKE = "#2c3e50";

export function fitTransform(
  vertices: [number, number][], width: number, height: number, pad = 10,
): Transform {
  if (vertices.length === 0) return { scale: 1, tx: 0, ty: 0 };
  let xlo = Infinity, xhi = -Infinity, ylo = Infinity, yhi = -Infinity;
  for (const [x, y] of vertices) {
    xlo = Math.min(xlo, x); xhi = Math.max(xhi, x);
    ylo = Math.min(ylo, y); yhi = Math.max(yhi, y);
  }
  const spanX = xhi - xlo || 1;
  const spanY = yhi - ylo || 1;
  const scale = Math.min((width - 2 * pad) / spanX, (height - 2 * pad) / spanY);
  // y flipped: canvas grows downward
  return {
    scale,
    tx: pad - xlo * scale + (width - 2 * pad - spanX * scale) / 2,
    ty: height - pad + ylo * scale - (height - 2 * pad - spanY * scale) / 2,
  };
}

export function toCanvas(t: Transform, p: [number, number]): [number, number] {
  return [p[0] * t.scale + t.tx, -p[1] * t.scale + t.ty];
}

export function drawMesh(
  ctx: CanvasRenderingContext2D, mesh: MeshPayload, width: number, height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  if (mesh.dimension !== 2 || mesh.faces.length === 0) return;
  const t = fitTransform(mesh.vertices, width, height);
  ctx.lineWidth = 0.6;
  ctx.strokeStyle = EDGE_STROKE;
  for (let k = 0; k < mesh.faces.length; k++) {
    const face = mesh.faces[k];
    ctx.beginPath();
    face.forEach((vi, i) => {
      const [x, y] = toCanvas(t, mesh.vertices[vi]);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.closePath();
    ctx.fillStyle = mesh.provenance[k] === 0 ? BASE_FILL : TEMPLATE_FILL;
    ctx.fill();
    ctx.stroke();
  }
}
