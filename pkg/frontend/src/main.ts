// Wires the console together: socket, store, input streaming and DOM.

import { AXES_SEND_HZ, AxesStreamer, AxisInput, KEY_BINDINGS } from "./input.js";
import { renderStage } from "./render.js";
import { ConsoleSocket } from "./socket.js";
import type { WebSocketLike } from "./socket.js";
import { ConsoleStore } from "./state.js";
import { CHANNELS, OWNERS } from "./types.js";

const params = new URLSearchParams(window.location.search);
const wsUrl =
  params.get("engine") ?? `ws://${window.location.hostname || "127.0.0.1"}:7003`;

const store = new ConsoleStore();
const socket = new ConsoleSocket(
  wsUrl,
  {
    onState: (snapshot) => store.applySnapshot(snapshot),
    onStatus: (status) => store.setConnection(status),
    onToast: (text) => store.addToast(text),
  },
  (url) => new WebSocket(url) as unknown as WebSocketLike,
);

const input = new AxisInput();
const streamer = new AxesStreamer(input, (axes) => {
  if (store.selectedAvatar) socket.sendAxes(store.selectedAvatar, axes);
});

// --- DOM ---------------------------------------------------------------

const canvas = document.getElementById("stage") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const avatarSelect = document.getElementById("avatar") as HTMLSelectElement;
const ownershipBox = document.getElementById("ownership") as HTMLDivElement;
const cueBox = document.getElementById("cues") as HTMLDivElement;
const toastBox = document.getElementById("toasts") as HTMLDivElement;
const slidersBox = document.getElementById("sliders") as HTMLDivElement;

const AXIS_SLIDERS = [
  ["forward", "forward (W/S)"],
  ["lateral", "lateral (A/D)"],
  ["vertical", "vertical (R/F)"],
  ["yaw_rate", "yaw (Q/E)"],
  ["pitch_rate", "pitch (T/G)"],
] as const;

for (const [axis, label] of AXIS_SLIDERS) {
  const wrap = document.createElement("label");
  wrap.className = "slider";
  wrap.textContent = label;
  const slider = document.createElement("input");
  slider.type = "range";
  slider.min = "-1";
  slider.max = "1";
  slider.step = "0.05";
  slider.value = "0";
  slider.addEventListener("input", () => input.setSlider(axis, Number(slider.value)));
  const zero = () => {
    slider.value = "0";
    input.setSlider(axis, 0);
  };
  slider.addEventListener("pointerup", zero);
  slider.addEventListener("pointercancel", zero);
  wrap.appendChild(slider);
  slidersBox.appendChild(wrap);
}

document.addEventListener("keydown", (e) => {
  if (e.repeat) return;
  if (input.keyDown(e.code)) e.preventDefault();
});
document.addEventListener("keyup", (e) => {
  if (input.keyUp(e.code)) e.preventDefault();
});
window.addEventListener("blur", () => input.releaseAll());

avatarSelect.addEventListener("change", () => store.selectAvatar(avatarSelect.value));

function syncControls(): void {
  const snapshot = store.snapshot;
  const connected = store.connection === "connected";
  banner.textContent = connected
    ? `connected - tick ${snapshot?.tick_no ?? 0}`
    : store.connection === "connecting"
      ? "connecting..."
      : "DISCONNECTED - controls inactive";
  banner.className = connected ? "banner ok" : "banner lost";

  const haveSelection = connected && store.selectedAvatar !== null;
  slidersBox.classList.toggle("disabled", !haveSelection);

  if (!snapshot) return;

  // Avatar picker.
  const ids = snapshot.avatars.map((a) => a.id);
  if (avatarSelect.options.length !== ids.length ||
      ids.some((id, i) => avatarSelect.options[i].value !== id)) {
    avatarSelect.innerHTML = "";
    for (const id of ids) {
      const opt = document.createElement("option");
      opt.value = id;
      opt.textContent = id;
      avatarSelect.appendChild(opt);
    }
  }
  if (store.selectedAvatar) avatarSelect.value = store.selectedAvatar;

  // Ownership toggles for the selected avatar.
  ownershipBox.innerHTML = "";
  const selected = store.selectedAvatar;
  if (selected) {
    const owned = store.ownershipOf(selected);
    for (const channel of CHANNELS) {
      const row = document.createElement("div");
      row.className = "own-row";
      const tag = document.createElement("span");
      tag.textContent = channel;
      row.appendChild(tag);
      for (const owner of OWNERS) {
        const btn = document.createElement("button");
        btn.textContent = owner;
        const current = owned[channel] ?? "mocap";
        if (current === owner || current.startsWith(`${owner}`)) btn.classList.add("active");
        btn.disabled = !connected;
        btn.addEventListener("click", () => socket.sendOwnership(selected, channel, owner));
        row.appendChild(btn);
      }
      ownershipBox.appendChild(row);
    }
  }

  // Cue buttons with fire counts from the snapshot.
  cueBox.innerHTML = "";
  for (const cue of snapshot.cues) {
    const btn = document.createElement("button");
    btn.className = "cue";
    btn.textContent = `${cue.name} [${cue.fire_count}]`;
    btn.title = cue.id;
    btn.addEventListener("click", () => socket.fireCue(cue.id));
    cueBox.appendChild(btn);
  }

  // Toasts.
  store.pruneToasts();
  toastBox.innerHTML = "";
  for (const toast of store.toasts) {
    const div = document.createElement("div");
    div.className = "toast";
    div.textContent = toast.text;
    toastBox.appendChild(div);
  }
}

store.onChange(syncControls);

function frame(): void {
  renderStage(canvas, store);
  requestAnimationFrame(frame);
}

socket.connect();
setInterval(() => streamer.tick(), 1000 / AXES_SEND_HZ);
requestAnimationFrame(frame);

// Not used further, but keeps the binding table referenced for bundlers.
void KEY_BINDINGS;
