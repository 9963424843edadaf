// Typed client for the threshold-explorer JSON API.

export interface Meta {
  geometry: string;
  dimension: number;
  cell_size: number;
  samples: number;
  extents: number[];
  max_vf: number;
}

/** [homology dim, birth, death]; death null means the class never dies. */
export type DiagramPair = [number, number, number | null];

export interface Diagram {
  pairs: DiagramPair[];
  max_vf: number;
}

export interface Betti {
  vf: number;
  b0: number;
  b1: number;
  b2?: number;
}

export interface MeshPayload {
  vf: number;
  antialias: boolean;
  dimension: number;
  vertices: [number, number][];
  faces: number[][];
  provenance: number[];
  components: number;
  base_cells: number;
  pinches: unknown[];
}

export type Fetcher = (path: string, signal?: AbortSignal) => Promise<unknown>;

export const httpFetcher: Fetcher = async (path, signal) => {
  const resp = await fetch(path, { signal });
  if (!resp.ok) {
    throw new Error(`${path}: HTTP ${resp.status}`);
  }
  return resp.json();
};

export function bettiUrl(vf: number): string {
  return `/betti?vf=${vf}`;
}

export function meshUrl(vf: number, antialias: boolean): string {
  return `/mesh?vf=${vf}&antialias=${antialias}`;
}
