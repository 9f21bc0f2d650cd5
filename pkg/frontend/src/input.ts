// Virtual manipulator input: keyboard plus on-screen sliders merged into
// one axes vector, streamed at 30 Hz while active with a final all-zero
// message on release.
//
// Keys: W/S forward, A/D lateral, Q/E yaw, R/F vertical, T/G pitch.

export interface Axes {
  forward: number;
  lateral: number;
  vertical: number;
  yaw_rate: number;
  pitch_rate: number;
}

export const ZERO_AXES: Axes = {
  forward: 0,
  lateral: 0,
  vertical: 0,
  yaw_rate: 0,
  pitch_rate: 0,
};

export const AXES_SEND_HZ = 30;

type AxisName = keyof Axes;

export const KEY_BINDINGS: Record<string, { axis: AxisName; sign: 1 | -1 }> = {
  KeyW: { axis: "forward", sign: 1 },
  KeyS: { axis: "forward", sign: -1 },
  KeyD: { axis: "lateral", sign: 1 },
  KeyA: { axis: "lateral", sign: -1 },
  KeyE: { axis: "yaw_rate", sign: 1 },
  KeyQ: { axis: "yaw_rate", sign: -1 },
  KeyR: { axis: "vertical", sign: 1 },
  KeyF: { axis: "vertical", sign: -1 },
  KeyT: { axis: "pitch_rate", sign: 1 },
  KeyG: { axis: "pitch_rate", sign: -1 },
};

const clamp = (v: number): number => Math.max(-1, Math.min(1, v));

export class AxisInput {
  private held = new Set<string>();
  private sliders: Partial<Axes> = {};

  keyDown(code: string): boolean {
    if (!(code in KEY_BINDINGS)) return false;
    this.held.add(code);
    return true;
  }

  keyUp(code: string): boolean {
    return this.held.delete(code);
  }

  setSlider(axis: AxisName, value: number): void {
    this.sliders[axis] = clamp(value);
  }

  clearSliders(): void {
    this.sliders = {};
  }

  releaseAll(): void {
    this.held.clear();
    this.sliders = {};
  }

  current(): Axes {
    const axes: Axes = { ...ZERO_AXES };
    for (const code of this.held) {
      const bind = KEY_BINDINGS[code];
      axes[bind.axis] = clamp(axes[bind.axis] + bind.sign);
    }
    for (const [axis, value] of Object.entries(this.sliders) as [AxisName, number][]) {
      axes[axis] = clamp(axes[axis] + value);
    }
    return axes;
  }

  isActive(): boolean {
    const axes = this.current();
    return (
      axes.forward !== 0 ||
      axes.lateral !== 0 ||
      axes.vertical !== 0 ||
      axes.yaw_rate !== 0 ||
      axes.pitch_rate !== 0
    );
  }
}

/**
 * Drives the 30 Hz axes stream: emits the current vector every tick while
 * any axis is deflected, then exactly one all-zero message when all axes
 * are released.
 */
export class AxesStreamer {
  private wasActive = false;

  constructor(
    private input: AxisInput,
    private send: (axes: Axes) => void,
  ) {}

  tick(): void {
    const active = this.input.isActive();
    if (active) {
      this.send(this.input.current());
    } else if (this.wasActive) {
      this.send({ ...ZERO_AXES });
    }
    this.wasActive = active;
  }
}
