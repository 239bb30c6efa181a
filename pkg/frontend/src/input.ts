// Stick input: keyboard arrows (fallback) and the Gamepad API, mapped to a
// single vertical axis. Only wired up for the take-over architecture.

export class StickInput {
  value = 0;
  private keyVelocity = 0;
  private sensitivity: number;
  private keys = new Set<string>();

  constructor(sensitivity = 2.0) {
    this.sensitivity = sensitivity;
  }

  attachKeyboard(target: Window): void {
    target.addEventListener("keydown", (ev) => {
      if (ev.key === "ArrowUp" || ev.key === "ArrowDown") {
        this.keys.add(ev.key);
        ev.preventDefault();
      }
    });
    target.addEventListener("keyup", (ev) => this.keys.delete(ev.key));
  }

  // dt in seconds; integrates keyboard stick motion, reads gamepad directly
  poll(dt: number): number {
    const pads = typeof navigator !== "undefined" ? navigator.getGamepads?.() ?? [] : [];
    const pad = Array.from(pads).find(Boolean);
    if (pad) {
      const axis = pad.axes?.[1] ?? 0;
      if (Math.abs(axis) > 0.08) {
        this.value = -axis * 3.0;
        return this.value;
      }
    }
    let rate = 0;
    if (this.keys.has("ArrowUp")) rate += this.sensitivity;
    if (this.keys.has("ArrowDown")) rate -= this.sensitivity;
    if (rate === 0) {
      this.value *= Math.max(0, 1 - 1.5 * dt); // recenter slowly
    } else {
      this.value = Math.max(-3, Math.min(3, this.value + rate * dt));
    }
    return this.value;
  }
}
