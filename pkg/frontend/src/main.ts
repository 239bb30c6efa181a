// Cockpit bootstrap: connect to a session over the WebSocket bridge, render at
// display rate, and wire pilot inputs.
//
// URL parameters: ?host=localhost:8773&session=<id>  (host is the HTTP/WS port,
// i.e. service port + 1). With no session given, the session list is shown.

import { SessionClient } from "./client.js";
import { StickInput } from "./input.js";
import { CockpitModel, Mode } from "./model.js";
import { FramePayload } from "./protocol.js";
import { Transport, WsTransport } from "./transport.js";
import { AudioCues, drawSca1Screen, drawSca2Screen } from "./view.js";

const params = new URLSearchParams(window.location.search);
const host = params.get("host") ?? `${window.location.hostname}:8773`;
const sessionId = params.get("session");

const app = document.getElementById("app")!;

async function listSessions(): Promise<void> {
  const resp = await fetch(`http://${host}/sessions`);
  const sessions = (await resp.json()) as Array<Record<string, unknown>>;
  const list = document.createElement("ul");
  for (const s of sessions) {
    const li = document.createElement("li");
    const a = document.createElement("a");
    a.href = `?host=${host}&session=${s.id}`;
    a.textContent = `${s.id} - ${s.name} (${s.status})`;
    li.appendChild(a);
    list.appendChild(li);
  }
  app.innerHTML = "<h2>sessions</h2>";
  app.appendChild(list);
  if (!sessions.length) {
    app.appendChild(document.createTextNode('no sessions - create one: POST /sessions {"name": "sca2-perf"}'));
  }
}

function connect(id: string): void {
  let transport: Transport | null = null;
  let reconnectDelay = 1000;

  const open = () => {
    const ws = new WsTransport(`ws://${host}/ws/${id}`, () => {
      reconnectDelay = 1000;
      overlay.style.display = "none";
    });
    ws.onClose(() => {
      overlay.style.display = "block";
      overlay.textContent = "connection lost - reconnecting";
      setTimeout(open, reconnectDelay);
      reconnectDelay = Math.min(reconnectDelay * 2, 8000);
    });
    transport = ws;
    bootstrap(ws, id);
  };

  const overlay = document.createElement("div");
  overlay.className = "overlay";
  overlay.style.display = "none";
  document.body.appendChild(overlay);
  open();
}

function bootstrap(transport: Transport, id: string): void {
  const client = new SessionClient(transport, id);
  const audio = new AudioCues();
  const stick = new StickInput();
  let model = new CockpitModel("SCA2");
  let lastGap = false;

  app.innerHTML = `
    <div id="status" class="statusline">connecting…</div>
    <canvas id="screen" width="900" height="620"></canvas>
    <div id="controls"></div>
    <div id="notice" class="notice"></div>
  `;
  const canvas = document.getElementById("screen") as HTMLCanvasElement;
  const statusEl = document.getElementById("status")!;
  const controls = document.getElementById("controls")!;
  const notice = document.getElementById("notice")!;

  function buildControls(mode: Mode): void {
    controls.innerHTML = "";
    if (mode === "SCA1") {
      const btn = document.createElement("button");
      btn.textContent = "TAKE OVER";
      btn.onclick = async () => {
        const result = await client.command("TakeOver");
        if (!result.ok) notice.textContent = result.message ?? "rejected";
      };
      controls.appendChild(btn);
      const hint = document.createElement("span");
      hint.textContent = "  stick: arrow keys or gamepad (after take-over)";
      controls.appendChild(hint);
      stick.attachKeyboard(window);
    } else {
      // Anti Locking control with its visible range
      const wrap = document.createElement("div");
      wrap.className = "antilock";
      wrap.innerHTML = `
        <fieldset><legend>Anti Locking</legend>
          <label>μ <input id="mu" type="range" min="1" max="20" step="1" value="1"></label>
          <span id="muval">μ = -</span> <span class="range">Range 1–20</span>
        </fieldset>
        <fieldset><legend>Severity estimate</legend>
          <button data-sev="Low" style="color:green">Low</button>
          <button data-sev="Middle" style="color:violet">Middle</button>
          <button data-sev="High" style="color:purple">High</button>
        </fieldset>`;
      controls.appendChild(wrap);
      const slider = wrap.querySelector("#mu") as HTMLInputElement;
      const muval = wrap.querySelector("#muval") as HTMLElement;
      slider.onchange = async () => {
        const value = parseInt(slider.value, 10);
        model.requestMu(value, client.lastFrameSeq);
        const result = await client.command("MuInput", value);
        if (result.ok) {
          model.ackMu(value, client.lastFrameSeq);
          muval.textContent = `μ = ${value}`;
        } else {
          notice.textContent = result.message ?? "rejected";
        }
      };
      wrap.querySelectorAll("button[data-sev]").forEach((b) => {
        (b as HTMLButtonElement).onclick = async () => {
          const severity = (b as HTMLButtonElement).dataset.sev!;
          const result = await client.command("SeverityEstimate", severity);
          notice.textContent = result.ok ? `estimate ${severity} sent` : result.message ?? "rejected";
        };
      });
      window.addEventListener("keydown", async (ev) => {
        if (ev.key === "ArrowUp" || ev.key === "ArrowDown") {
          notice.textContent = model.stickNotice ?? "stick input is not used here";
        }
      });
    }
  }

  client.onFrame((frame: FramePayload, gap: boolean) => {
    lastGap = gap;
    model.applyFrame(frame);
  });
  client.onEvent((event) => {
    model.applyEvent(event);
    while (model.toneRequests.length) audio.play(model.toneRequests.shift()!);
  });
  client.onDone((status) => {
    statusEl.textContent = `session ${status}`;
  });

  client.attach().then((info) => {
    const mode: Mode = info.family === "sca1" ? "SCA1" : "SCA2";
    model = new CockpitModel(mode);
    statusEl.textContent = `${info.name} [${info.status}] frames from #${info.lastSeq}`;
    buildControls(mode);
  });

  let lastTs = performance.now();
  let stickTimer = 0;
  function render(ts: number): void {
    const dt = Math.min(0.1, (ts - lastTs) / 1000);
    lastTs = ts;
    if (model.mode === "SCA1") {
      drawSca1Screen(canvas, model);
      if (model.canSendStick()) {
        stickTimer += dt;
        const v = stick.poll(dt);
        if (stickTimer >= 0.05) {
          stickTimer = 0;
          client.command("Stick", v);
        }
      }
    } else {
      drawSca2Screen(canvas, model);
    }
    if (lastGap) {
      const ctx = canvas.getContext("2d")!;
      ctx.fillStyle = "#ffcf40";
      ctx.fillText("frame gap", canvas.width - 80, 16);
    }
    requestAnimationFrame(render);
  }
  requestAnimationFrame(render);
}

if (sessionId) connect(sessionId);
else void listSessions();
