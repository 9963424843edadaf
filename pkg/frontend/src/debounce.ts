// Trailing-edge debouncer: one pending call, the last arguments win.

export class Debouncer {
  private handle: ReturnType<typeof setTimeout> | undefined;

  constructor(readonly delayMs: number) {}

  schedule(op: () => void): void {
    if (this.handle !== undefined) clearTimeout(this.handle);
    this.handle = setTimeout(() => {
      this.handle = undefined;
      op();
    }, this.delayMs);
  }

  cancel(): void {
    if (this.handle !== undefined) clearTimeout(this.handle);
    this.handle = undefined;
  }
}
