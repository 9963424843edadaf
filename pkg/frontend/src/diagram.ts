// Persistence-diagram scatter as an SVG string: birth vs death per
// homology dimension, the diagonal drawn, infinite deaths pinned to the
// top rail, and a movable line marking the current threshold f = 1 - vf.

import { Diagram } from "./api.js";

export const DIM_COLORS = ["#1f77b4", "#d62728", "#2ca02c"];

export function buildDiagramSvg(
  diagram: Diagram | null, size: number, thresholdF: number | null,
): string {
  const m = 34;
  const inner = size - 2 * m;
  const parts: string[] = [];
  parts.push(
    `<rect width="${size}" height="${size}" fill="white"/>`,
    `<line x1="${m}" y1="${size - m}" x2="${size - m}" y2="${size - m}" stroke="#333"/>`,
    `<line x1="${m}" y1="${m}" x2="${m}" y2="${size - m}" stroke="#333"/>`,
  );
  if (!diagram || diagram.pairs.length === 0) {
    parts.push(`<text x="${size / 2}" y="${size / 2}" text-anchor="middle" ` +
      `font-size="12" fill="#777">empty diagram</text>`);
    return svgWrap(parts, size);
  }
  let hi = 1;
  for (const [, birth, death] of diagram.pairs) {
    hi = Math.max(hi, birth, death ?? 0);
  }
  const sx = (v: number) => m + (v / hi) * inner;
  const sy = (v: number) => size - m - (v / hi) * inner;
  parts.push(`<line x1="${sx(0)}" y1="${sy(0)}" x2="${sx(hi)}" y2="${sy(hi)}" ` +
    `stroke="#aaa" stroke-dasharray="4 3"/>`);
  if (thresholdF !== null) {
    const x = sx(Math.min(thresholdF, hi));
    parts.push(`<line class="threshold" x1="${x}" y1="${m}" x2="${x}" ` +
      `y2="${size - m}" stroke="#f4a124" stroke-width="1.5"/>`);
  }
  diagram.pairs.forEach(([dim, birth, death]) => {
    const color = DIM_COLORS[dim % DIM_COLORS.length];
    if (death === null) {
      const x = sx(birth);
      parts.push(`<path class="pair dim${dim} inf" d="M ${x - 4} ${m + 6} ` +
        `L ${x} ${m - 2} L ${x + 4} ${m + 6} Z" fill="${color}"/>`);
    } else {
      parts.push(`<circle class="pair dim${dim}" cx="${sx(birth)}" ` +
        `cy="${sy(death)}" r="3.4" fill="${color}" fill-opacity="0.85"/>`);
    }
  });
  return svgWrap(parts, size);
}

function svgWrap(parts: string[], size: number): string {
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${size}" ` +
    `height="${size}" viewBox="0 0 ${size} ${size}">${parts.join("")}</svg>`;
}
