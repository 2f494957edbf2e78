/** Pure view math and draw-list building for the top-down mixed-space view. */

import type { SnapshotMsg } from "./protocol.js";

export interface Transform {
    scale: number;
    ox: number;
    oy: number;
}

export interface Bounds {
    minX: number;
    maxX: number;
    minY: number;
    maxY: number;
}

export function trackBounds(waypoints: [number, number][]): Bounds {
    let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
    for (const [x, y] of waypoints) {
        minX = Math.min(minX, x);
        maxX = Math.max(maxX, x);
        minY = Math.min(minY, y);
        maxY = Math.max(maxY, y);
    }
    return { minX, maxX, minY, maxY };
}

/** Fit world bounds into a canvas, preserving aspect, flipping y. */
export function fitTransform(
    bounds: Bounds,
    width: number,
    height: number,
    margin = 20,
): Transform {
    const spanX = Math.max(1e-9, bounds.maxX - bounds.minX);
    const spanY = Math.max(1e-9, bounds.maxY - bounds.minY);
    const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanY);
    const ox = width / 2 - scale * (bounds.minX + bounds.maxX) / 2;
    const oy = height / 2 + scale * (bounds.minY + bounds.maxY) / 2;
    return { scale, ox, oy };
}

export function worldToScreen(t: Transform, x: number, y: number): [number, number] {
    return [t.ox + t.scale * x, t.oy - t.scale * y];
}

export function screenToWorld(t: Transform, px: number, py: number): [number, number] {
    return [(px - t.ox) / t.scale, (t.oy - py) / t.scale];
}

export const KIND_COLORS: Record<string, string> = {
    physical: "#e4572e", // emulated-physical twin
    virtual: "#3f88c5",
    hdv: "#c842f5",
    unknown: "#777777",
};

export interface VehicleMarker {
    id: string;
    x: number;
    y: number;
    theta: number;
    v: number;
    color: string;
}

/** Markers in the snapshot's (formation) order. */
export function buildMarkers(
    snapshot: SnapshotMsg,
    kinds: Record<string, string>,
): VehicleMarker[] {
    return snapshot.vehicles.map((vehicle) => ({
        id: vehicle.id,
        x: vehicle.x,
        y: vehicle.y,
        theta: vehicle.theta,
        v: vehicle.v,
        color: KIND_COLORS[kinds[vehicle.id] ?? "unknown"] ?? KIND_COLORS.unknown,
    }));
}

/** Nearest marker within a screen-space radius, for click selection. */
export function hitTestVehicle(
    markers: VehicleMarker[],
    transform: Transform,
    px: number,
    py: number,
    radiusPx = 14,
): VehicleMarker | null {
    let best: VehicleMarker | null = null;
    let bestD = radiusPx;
    for (const marker of markers) {
        const [sx, sy] = worldToScreen(transform, marker.x, marker.y);
        const d = Math.hypot(sx - px, sy - py);
        if (d <= bestD) {
            best = marker;
            bestD = d;
        }
    }
    return best;
}

/** Staleness rule: no snapshot for more than a second means stale data. */
export function isStale(lastSnapshotWallMs: number | null, nowWallMs: number): boolean {
    if (lastSnapshotWallMs === null) return true;
    return nowWallMs - lastSnapshotWallMs > 1000;
}
