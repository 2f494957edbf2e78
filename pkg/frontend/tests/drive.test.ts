import { describe, expect, it } from "vitest";

import { DEFAULT_DRIVE_PARAMS, applyDrive, inputFromKeys } from "../src/drive.js";

const idle = { throttle: 0, brake: 0, steer: 0, timestamp: 0 };

describe("drive mapping", () => {
    it("full brake held ratchets the command to zero", () => {
        let vCmd = 6.0;
        for (let i = 0; i < 100; i++) {
            vCmd = applyDrive(vCmd, { ...idle, brake: 1 }, 0.05).vCmd;
        }
        expect(vCmd).toBe(0);
    });

    it("zero steer means zero steering command", () => {
        expect(applyDrive(3.0, idle, 0.05).phiCmd).toBe(0);
    });

    it("steer maps linearly to the steering limit", () => {
        expect(applyDrive(0, { ...idle, steer: 1 }, 0.05).phiCmd).toBeCloseTo(
            DEFAULT_DRIVE_PARAMS.steerMax,
            12,
        );
        expect(applyDrive(0, { ...idle, steer: -0.5 }, 0.05).phiCmd).toBeCloseTo(
            -DEFAULT_DRIVE_PARAMS.steerMax / 2,
            12,
        );
    });

    it("throttle integrates at the pedal authority", () => {
        const out = applyDrive(1.0, { ...idle, throttle: 1 }, 0.05);
        expect(out.vCmd).toBeCloseTo(1.0 + 3.0 * 0.05, 12);
    });

    it("never exceeds the speed limit or goes negative", () => {
        expect(applyDrive(13.99, { ...idle, throttle: 1 }, 1.0).vCmd).toBe(14.0);
        expect(applyDrive(0.01, { ...idle, brake: 1 }, 1.0).vCmd).toBe(0);
    });

    it("clamps out-of-range pedals", () => {
        const out = applyDrive(1.0, { throttle: 7, brake: -2, steer: 9, timestamp: 0 }, 0.05);
        expect(out.vCmd).toBeCloseTo(1.0 + 3.0 * 0.05, 12);
        expect(out.phiCmd).toBeCloseTo(DEFAULT_DRIVE_PARAMS.steerMax, 12);
    });
});

describe("keyboard binding", () => {
    it("maps the documented keys", () => {
        expect(inputFromKeys(new Set(["ArrowUp"]), 0).throttle).toBe(1);
        expect(inputFromKeys(new Set(["KeyW"]), 0).throttle).toBe(1);
        expect(inputFromKeys(new Set(["ArrowDown"]), 0).brake).toBe(1);
        expect(inputFromKeys(new Set(["ArrowLeft"]), 0).steer).toBe(1);
        expect(inputFromKeys(new Set(["ArrowRight"]), 0).steer).toBe(-1);
        expect(inputFromKeys(new Set(["Space", "ArrowUp"]), 0).brake).toBe(1);
        expect(inputFromKeys(new Set(["ArrowLeft", "ArrowRight"]), 0).steer).toBe(0);
    });
});
