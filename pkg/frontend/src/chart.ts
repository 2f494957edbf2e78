/** Velocity strip chart: per-vehicle ring buffers over a sliding window. */

export interface Sample {
    t: number;
    v: number;
}

export class SeriesBuffer {
    private samples: Sample[] = [];

    constructor(public windowS = 30.0, public maxSamples = 2400) {}

    push(t: number, v: number): void {
        this.samples.push({ t, v });
        const cutoff = t - this.windowS;
        while (this.samples.length > 0 && (this.samples[0].t < cutoff || this.samples.length > this.maxSamples)) {
            this.samples.shift();
        }
    }

    latest(): Sample | null {
        return this.samples.length ? this.samples[this.samples.length - 1] : null;
    }

    range(): { min: number; max: number } {
        let min = Infinity, max = -Infinity;
        for (const s of this.samples) {
            min = Math.min(min, s.v);
            max = Math.max(max, s.v);
        }
        return this.samples.length ? { min, max } : { min: 0, max: 1 };
    }

    /** Polyline in [0,1]^2 chart space for the given time window and v range. */
    polyline(tEnd: number, vMin: number, vMax: number): [number, number][] {
        const span = Math.max(1e-9, vMax - vMin);
        const t0 = tEnd - this.windowS;
        return this.samples
            .filter((s) => s.t >= t0)
            .map((s) => [(s.t - t0) / this.windowS, (s.v - vMin) / span]);
    }

    get length(): number {
        return this.samples.length;
    }
}
