// View state for the threshold explorer.
//
// The rendered mesh and Betti readout always come from server responses
// (no client-side recomputation), and stale frames are impossible: every
// request carries a sequence number, later slider positions abort earlier
// in-flight fetches, and a response is applied only if it is the newest.

import { Betti, Diagram, Fetcher, Meta, MeshPayload, bettiUrl, meshUrl } from "./api.js";
import { Debouncer } from "./debounce.js";

export interface ViewState {
  vf: number;
  antialias: boolean;
  meta: Meta | null;
  diagram: Diagram | null;
  betti: Betti | null;
  mesh: MeshPayload | null;
  stale: boolean;
  loading: boolean;
}

export const DEBOUNCE_MS = 100;

export class ThresholdExplorer {
  state: ViewState = {
    vf: 0.5,
    antialias: false,
    meta: null,
    diagram: null,
    betti: null,
    mesh: null,
    stale: false,
    loading: false,
  };

  private listeners: Array<(s: ViewState) => void> = [];
  private debouncer = new Debouncer(DEBOUNCE_MS);
  private seq = 0;
  private applied = 0;
  private controller: AbortController | null = null;

  constructor(private fetcher: Fetcher) {}

  onChange(fn: (s: ViewState) => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  async init(): Promise<void> {
    this.state.meta = (await this.fetcher("/meta")) as Meta;
    this.state.diagram = (await this.fetcher("/diagram")) as Diagram;
    this.emit();
    await this.refresh();
  }

  /** Slider input: debounced fetch so drags stay cheap. */
  setThreshold(vf: number): void {
    this.state.vf = vf;
    this.emit();
    this.debouncer.schedule(() => void this.refresh());
  }

  /** Toggle re-fetches immediately. */
  setAntialias(flag: boolean): void {
    this.state.antialias = flag;
    this.emit();
    void this.refresh();
  }

  async refresh(): Promise<void> {
    const id = ++this.seq;
    this.controller?.abort();
    const controller = new AbortController();
    this.controller = controller;
    this.state.loading = true;
    this.emit();
    const { vf, antialias } = this.state;
    try {
      const [betti, mesh] = await Promise.all([
        this.fetcher(bettiUrl(vf), controller.signal) as Promise<Betti>,
        this.fetcher(meshUrl(vf, antialias), controller.signal) as Promise<MeshPayload>,
      ]);
      if (id <= this.applied) return; // an even newer response already landed
      this.applied = id;
      this.state.betti = betti;
      this.state.mesh = mesh;
      this.state.stale = false;
    } catch (err) {
      if ((err as { name?: string }).name === "AbortError") return;
      // keep the last good state, flag it visibly
      this.state.stale = true;
    } finally {
      if (id === this.seq) this.state.loading = false;
      this.emit();
    }
  }

  /** Template-provenance element count in the current mesh (for the UI badge). */
  templateElementCount(): number {
    const mesh = this.state.mesh;
    if (!mesh || mesh.dimension !== 2) return 0;
    return mesh.provenance.filter((p) => p !== 0).length;
  }
}
