import { describe, expect, it } from "vitest";

import type { SnapshotMsg } from "../src/protocol.js";
import {
    buildMarkers,
    fitTransform,
    hitTestVehicle,
    isStale,
    screenToWorld,
    trackBounds,
    worldToScreen,
} from "../src/view.js";

const snapshot: SnapshotMsg = {
    type: "snapshot",
    t: 10.0,
    vehicles: [
        { id: "v1", t: 10, x: 10, y: -25, theta: 0, v: 4.2 },
        { id: "v2", t: 10, x: 2, y: -25, theta: 0, v: 4.1 },
        { id: "h3", t: 10, x: -6, y: -25, theta: 0, v: 3.9 },
    ],
    obstacles: [],
};

const kinds = { v1: "physical", v2: "virtual", h3: "hdv" };

describe("view math", () => {
    it("screen transform round-trips points", () => {
        const bounds = trackBounds([[-47, -25], [47, 25]]);
        const transform = fitTransform(bounds, 960, 560);
        for (const [x, y] of [[-47, -25], [0, 0], [47, 25], [12.3, -7.7]] as [number, number][]) {
            const [px, py] = worldToScreen(transform, x, y);
            const [wx, wy] = screenToWorld(transform, px, py);
            expect(wx).toBeCloseTo(x, 9);
            expect(wy).toBeCloseTo(y, 9);
            expect(px).toBeGreaterThanOrEqual(0);
            expect(py).toBeGreaterThanOrEqual(0);
            expect(px).toBeLessThanOrEqual(960);
            expect(py).toBeLessThanOrEqual(560);
        }
    });

    it("flips the y axis so north is up", () => {
        const bounds = trackBounds([[-10, -10], [10, 10]]);
        const transform = fitTransform(bounds, 200, 200);
        const [, pyLow] = worldToScreen(transform, 0, -10);
        const [, pyHigh] = worldToScreen(transform, 0, 10);
        expect(pyHigh).toBeLessThan(pyLow);
    });

    it("markers keep formation order and kind colors", () => {
        const markers = buildMarkers(snapshot, kinds);
        expect(markers.map((m) => m.id)).toEqual(["v1", "v2", "h3"]);
        expect(new Set(markers.map((m) => m.color)).size).toBe(3);
    });

    it("hit test picks the nearest vehicle within radius", () => {
        const bounds = trackBounds([[-47, -25], [47, 25]]);
        const transform = fitTransform(bounds, 960, 560);
        const markers = buildMarkers(snapshot, kinds);
        const [px, py] = worldToScreen(transform, 2, -25);
        expect(hitTestVehicle(markers, transform, px + 3, py - 3)?.id).toBe("v2");
        expect(hitTestVehicle(markers, transform, px + 300, py)).toBeNull();
    });

    it("stale rule fires after one second without snapshots", () => {
        expect(isStale(null, 5000)).toBe(true);
        expect(isStale(4500, 5000)).toBe(false);
        expect(isStale(3900, 5000)).toBe(true);
    });
});
