/** Browser operator console: live view, driving, obstacles, perturbations. */

import { SeriesBuffer } from "./chart.js";
import { DEFAULT_DRIVE_PARAMS, applyDrive, inputFromKeys } from "./drive.js";
import type { SnapshotMsg, WireMessage } from "./protocol.js";
import { Session } from "./session.js";
import {
    KIND_COLORS,
    Transform,
    VehicleMarker,
    buildMarkers,
    fitTransform,
    hitTestVehicle,
    isStale,
    screenToWorld,
    trackBounds,
    worldToScreen,
} from "./view.js";

interface ScenarioDoc {
    name: string;
    vehicles: { id: string; kind: string; controller?: { type?: string } }[];
}

interface TrackDoc {
    waypoints: [number, number][];
    lap_length: number;
    landmark_e_s: number;
}

const base = window.location.origin;
const viewCanvas = document.getElementById("view") as HTMLCanvasElement;
const chartCanvas = document.getElementById("chart") as HTMLCanvasElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const status = document.getElementById("status") as HTMLDivElement;
const popup = document.getElementById("popup") as HTMLDivElement;
const facilityBar = document.getElementById("facilities") as HTMLDivElement;

let track: TrackDoc | null = null;
let kinds: Record<string, string> = {};
let order: string[] = [];
let hdvId: string | null = null;
let snapshot: SnapshotMsg | null = null;
let transform: Transform | null = null;
let markers: VehicleMarker[] = [];
let selected: string | null = null;
let session: Session | null = null;
let vCmd = 0;
const series = new Map<string, SeriesBuffer>();
const keys = new Set<string>();

async function boot(): Promise<void> {
    const [scenarioRes, trackRes] = await Promise.all([
        fetch(`${base}/scenario`),
        fetch(`${base}/track`),
    ]);
    if (!scenarioRes.ok || !trackRes.ok) {
        banner.textContent = "no live scenario on this coordinator";
        banner.classList.remove("hidden");
        return;
    }
    const scenario = (await scenarioRes.json()) as ScenarioDoc;
    track = (await trackRes.json()) as TrackDoc;
    for (const vehicle of scenario.vehicles) {
        kinds[vehicle.id] = vehicle.kind;
        order.push(vehicle.id);
        series.set(vehicle.id, new SeriesBuffer());
        // Drive target: the human-controlled vehicle, whichever kind it is
        // (a virtual-dynamics car or one of the camera-localized miniatures).
        if (vehicle.controller?.type === "human" && hdvId === null) hdvId = vehicle.id;
    }
    status.textContent = `${scenario.name}: ${order.join(" > ")}` +
        (hdvId ? ` | driving ${hdvId} (arrows/WASD, space = brake)` : " | spectator");

    session = await Session.connect(base, `console-${Date.now() % 100000}`, (url) => new WebSocket(url));
    session.onMessage(onMessage);
    session.onClose(() => banner.classList.remove("hidden"));

    setInterval(driveTick, 50);
    requestAnimationFrame(render);
    buildFacilityBar();
}

function onMessage(msg: WireMessage): void {
    if (msg.type !== "snapshot") return;
    snapshot = msg;
    markers = buildMarkers(msg, kinds);
    for (const vehicle of msg.vehicles) {
        series.get(vehicle.id)?.push(msg.t, vehicle.v);
    }
}

function driveTick(): void {
    if (!session || !hdvId || !snapshot) return;
    const input = inputFromKeys(keys, Date.now());
    if (input.throttle === 0 && input.brake === 0 && input.steer === 0 && vCmd === 0) {
        return; // idle pedals, nothing to ratchet
    }
    const out = applyDrive(vCmd, input, 0.05, DEFAULT_DRIVE_PARAMS);
    vCmd = out.vCmd;
    session.send({ type: "cmd", id: hdvId, t: snapshot.t, v_cmd: out.vCmd, phi_cmd: out.phiCmd });
}

function render(): void {
    const ctx = viewCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, viewCanvas.width, viewCanvas.height);
    if (track) {
        const bounds = trackBounds(track.waypoints);
        transform = fitTransform(bounds, viewCanvas.width, viewCanvas.height);
        ctx.strokeStyle = "#444";
        ctx.lineWidth = 14;
        ctx.beginPath();
        track.waypoints.forEach(([x, y], i) => {
            const [sx, sy] = worldToScreen(transform!, x, y);
            if (i === 0) ctx.moveTo(sx, sy);
            else ctx.lineTo(sx, sy);
        });
        ctx.stroke();
        ctx.strokeStyle = "#888";
        ctx.setLineDash([4, 8]);
        ctx.lineWidth = 1;
        ctx.stroke();
        ctx.setLineDash([]);
    }
    if (snapshot && transform) {
        for (const obstacle of snapshot.obstacles) {
            const [sx, sy] = worldToScreen(transform, obstacle.x, obstacle.y);
            ctx.fillStyle = "rgba(230, 57, 70, 0.65)";
            ctx.beginPath();
            ctx.arc(sx, sy, Math.max(5, obstacle.r * transform.scale), 0, 2 * Math.PI);
            ctx.fill();
        }
        for (const marker of markers) {
            const [sx, sy] = worldToScreen(transform, marker.x, marker.y);
            ctx.fillStyle = marker.color;
            ctx.save();
            ctx.translate(sx, sy);
            ctx.rotate(-marker.theta);
            ctx.fillRect(-8, -4, 16, 8);
            ctx.restore();
            ctx.fillStyle = "#ddd";
            ctx.font = "11px sans-serif";
            ctx.fillText(`${marker.id} ${marker.v.toFixed(1)}`, sx + 10, sy - 8);
            if (marker.id === selected) {
                ctx.strokeStyle = "#ffd166";
                ctx.beginPath();
                ctx.arc(sx, sy, 14, 0, 2 * Math.PI);
                ctx.stroke();
            }
        }
    }
    renderChart();
    banner.classList.toggle("hidden", !isStale(session?.lastMessageWallMs ?? null, Date.now()));
    requestAnimationFrame(render);
}

function renderChart(): void {
    const ctx = chartCanvas.getContext("2d")!;
    const { width, height } = chartCanvas;
    ctx.clearRect(0, 0, width, height);
    if (!snapshot) return;
    let vMin = Infinity, vMax = -Infinity;
    for (const buffer of series.values()) {
        const r = buffer.range();
        vMin = Math.min(vMin, r.min);
        vMax = Math.max(vMax, r.max);
    }
    if (!isFinite(vMin)) return;
    vMin = Math.min(vMin, 0);
    vMax = Math.max(vMax, vMin + 0.5);
    for (const id of order) {
        const buffer = series.get(id);
        if (!buffer || buffer.length < 2) continue;
        ctx.strokeStyle = KIND_COLORS[kinds[id] ?? "unknown"];
        ctx.beginPath();
        buffer.polyline(snapshot.t, vMin, vMax).forEach(([u, w], i) => {
            const px = u * width;
            const py = height - w * height;
            if (i === 0) ctx.moveTo(px, py);
            else ctx.lineTo(px, py);
        });
        ctx.stroke();
    }
    ctx.fillStyle = "#aaa";
    ctx.font = "10px sans-serif";
    ctx.fillText(`${vMax.toFixed(1)} m/s`, 4, 10);
    ctx.fillText(`${vMin.toFixed(1)} m/s`, 4, height - 2);
}

viewCanvas.addEventListener("click", (ev) => {
    if (!transform || !session) return;
    const rect = viewCanvas.getBoundingClientRect();
    const px = ev.clientX - rect.left;
    const py = ev.clientY - rect.top;
    const hit = hitTestVehicle(markers, transform, px, py);
    if (hit) {
        selected = hit.id;
        showPerturbPopup(hit, px, py);
        return;
    }
    popup.classList.add("hidden");
    selected = null;
    const [wx, wy] = screenToWorld(transform, px, py);
    session.send({ type: "obstacle", x: wx, y: wy, r: 1.0 });
});

function showPerturbPopup(marker: VehicleMarker, px: number, py: number): void {
    popup.innerHTML = "";
    popup.style.left = `${px + 12}px`;
    popup.style.top = `${py - 12}px`;
    for (const dv of [+0.5, -0.5]) {
        const button = document.createElement("button");
        button.textContent = `${marker.id} ${dv > 0 ? "+" : ""}${dv} m/s`;
        button.onclick = () => {
            session?.send({ type: "perturb", id: marker.id, dv });
            popup.classList.add("hidden");
        };
        popup.appendChild(button);
    }
    popup.classList.remove("hidden");
}

function buildFacilityBar(): void {
    const facilities: [string, string[]][] = [
        ["lamp-row-1", ["on", "off"]],
        ["light-main", ["red", "yellow", "green"]],
        ["gate-east", ["up", "down"]],
    ];
    for (const [id, states] of facilities) {
        const label = document.createElement("span");
        label.textContent = id;
        facilityBar.appendChild(label);
        for (const state of states) {
            const button = document.createElement("button");
            button.textContent = state;
            button.onclick = () =>
                session?.send({ type: "facility", id, state: state as never });
            facilityBar.appendChild(button);
        }
    }
}

window.addEventListener("keydown", (ev) => {
    keys.add(ev.code);
    if (["ArrowUp", "ArrowDown", "ArrowLeft", "ArrowRight", "Space"].includes(ev.code)) {
        ev.preventDefault();
    }
});
window.addEventListener("keyup", (ev) => keys.delete(ev.code));

boot().catch((err) => {
    banner.textContent = `console failed to start: ${err}`;
    banner.classList.remove("hidden");
});
