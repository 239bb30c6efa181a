// Canvas rendering: the take-over tracking screen (target line + circle and
// aircraft marker) and the supervisory screen (three stacked strip charts).

import { CockpitModel, RingSeries } from "./model.js";

const CHART_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

export function drawStripChart(
  ctx: CanvasRenderingContext2D,
  series: RingSeries,
  x: number,
  y: number,
  w: number,
  h: number,
  title: string,
  options: { hline?: number | null; hlineColor?: string; markers?: { t: number; color: string }[]; yMin?: number; yMax?: number } = {},
): void {
  ctx.save();
  ctx.strokeStyle = "#666";
  ctx.strokeRect(x, y, w, h);
  ctx.fillStyle = "#ddd";
  ctx.font = "12px sans-serif";
  ctx.fillText(title, x + 6, y + 14);
  const samples = series.samples;
  if (samples.length >= 2) {
    const t1 = samples[samples.length - 1].t;
    const t0 = Math.max(samples[0].t, t1 - series.windowSeconds);
    let lo = options.yMin ?? Infinity;
    let hi = options.yMax ?? -Infinity;
    if (options.yMin === undefined || options.yMax === undefined) {
      for (const s of samples) {
        for (const v of s.values) {
          if (v < lo) lo = v;
          if (v > hi) hi = v;
        }
      }
      if (options.hline != null) {
        lo = Math.min(lo, options.hline);
        hi = Math.max(hi, options.hline);
      }
      if (hi - lo < 1e-6) {
        hi += 0.5;
        lo -= 0.5;
      }
      const pad = 0.08 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
    const px = (t: number) => x + ((t - t0) / Math.max(t1 - t0, 1e-9)) * w;
    const py = (v: number) => y + h - ((v - lo) / (hi - lo)) * h;
    const nSeries = samples[samples.length - 1].values.length;
    for (let j = 0; j < nSeries; j++) {
      ctx.beginPath();
      ctx.strokeStyle = CHART_COLORS[j % CHART_COLORS.length];
      let started = false;
      for (const s of samples) {
        if (s.t < t0 || j >= s.values.length) continue;
        const X = px(s.t);
        const Y = py(s.values[j]);
        if (!started) {
          ctx.moveTo(X, Y);
          started = true;
        } else ctx.lineTo(X, Y);
      }
      ctx.stroke();
    }
    if (options.hline != null) {
      ctx.strokeStyle = options.hlineColor ?? "#000";
      ctx.setLineDash([5, 4]);
      ctx.beginPath();
      ctx.moveTo(x, py(options.hline));
      ctx.lineTo(x + w, py(options.hline));
      ctx.stroke();
      ctx.setLineDash([]);
    }
    for (const m of options.markers ?? []) {
      if (m.t < t0 || m.t > t1) continue;
      ctx.strokeStyle = m.color;
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(px(m.t), y);
      ctx.lineTo(px(m.t), y + h);
      ctx.stroke();
      ctx.lineWidth = 1;
    }
  }
  ctx.restore();
}

export function drawSca2Screen(canvas: HTMLCanvasElement, model: CockpitModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#101418";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const w = canvas.width - 40;
  const h = Math.floor((canvas.height - 60) / 3);
  const markers = model.markers.map((m) => ({ t: m.t, color: m.color }));
  drawStripChart(ctx, model.cfm, 20, 10, w, h, "CfM (min over actuators)", {
    hline: model.bufferDelta,
    hlineColor: "#eee",
    markers,
    yMin: 0,
    yMax: 1,
  });
  drawStripChart(ctx, model.tracking, 20, 20 + h, w, h, "reference tracking (cmd vs output)", {
    markers,
  });
  drawStripChart(ctx, model.gcd, 20, 30 + 2 * h, w, h, "graceful command degradation", {
    markers,
  });
}

export function drawSca1Screen(canvas: HTMLCanvasElement, model: CockpitModel): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.fillStyle = "#0b2740";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const frame = model.lastFrame;
  const cx = canvas.width / 2;
  const scale = canvas.height / 8; // output units -> pixels
  const cmd = frame ? frame.cmd[0] : 0;
  const out = frame ? frame.out[0] : 0;
  const yCmd = canvas.height / 2 - cmd * scale;
  const yOut = canvas.height / 2 - out * scale;
  // target: orange line with a circle in the middle
  ctx.strokeStyle = "orange";
  ctx.lineWidth = 3;
  ctx.beginPath();
  ctx.moveTo(40, yCmd);
  ctx.lineTo(canvas.width - 40, yCmd);
  ctx.stroke();
  ctx.beginPath();
  ctx.arc(cx, yCmd, 26, 0, Math.PI * 2);
  ctx.stroke();
  // aircraft nose: blue sphere
  const grad = ctx.createRadialGradient(cx - 4, yOut - 4, 2, cx, yOut, 14);
  grad.addColorStop(0, "#9ecbff");
  grad.addColorStop(1, "#1455c0");
  ctx.fillStyle = grad;
  ctx.beginPath();
  ctx.arc(cx, yOut, 14, 0, Math.PI * 2);
  ctx.fill();
  // CfM ribbon along the bottom
  ctx.fillStyle = "#ddd";
  ctx.font = "12px sans-serif";
  const cfm = model.cfm.latest();
  ctx.fillText(`CfM ${cfm ? cfm.values[0].toFixed(2) : "-"}`, 12, canvas.height - 12);
  if (model.alertActive && !model.takenOver) {
    ctx.fillStyle = "#ff3030";
    ctx.font = "bold 22px sans-serif";
    ctx.fillText("TAKE OVER", cx - 60, 34);
  }
  if (model.takenOver) {
    ctx.fillStyle = "#50ff70";
    ctx.font = "14px sans-serif";
    ctx.fillText("manual control", cx - 48, 34);
  }
  ctx.lineWidth = 1;
}

// short synthesized cues; severities get distinct pitches
const TONES: Record<string, number> = {
  "takeover-alert": 880,
  anomaly: 520,
  "severity-Low": 440,
  "severity-Middle": 600,
  "severity-High": 760,
};

export class AudioCues {
  private ctx: AudioContext | null = null;

  play(kind: string): void {
    const freq = TONES[kind] ?? 500;
    try {
      this.ctx = this.ctx ?? new AudioContext();
      const osc = this.ctx.createOscillator();
      const gain = this.ctx.createGain();
      osc.frequency.value = freq;
      gain.gain.setValueAtTime(0.15, this.ctx.currentTime);
      gain.gain.exponentialRampToValueAtTime(1e-4, this.ctx.currentTime + 0.5);
      osc.connect(gain).connect(this.ctx.destination);
      osc.start();
      osc.stop(this.ctx.currentTime + 0.5);
    } catch {
      // no audio available; visual cues still shown
    }
  }
}
