/**
 * Event binning: fixed-duration windows or fixed event counts.
 * Matches the pipeline's slicing semantics: time windows are half-open
 * [t0 + i*dt, t0 + (i+1)*dt), empty windows are skipped but keep their
 * ordinal index; a trailing count bin may hold fewer than n events.
 */

import { EventArrays } from "./formats";

export interface EventBin {
  index: number;
  /** index range [lo, hi) into the event arrays */
  lo: number;
  hi: number;
  tStart: number;
  tEnd: number;
}

export interface BinningOptions {
  mode: "time" | "count";
  deltaT?: number;
  count?: number;
  t0?: number;
}

export function sliceByTime(events: EventArrays, deltaT: number, t0?: number): EventBin[] {
  if (deltaT <= 0) throw new Error(`deltaT must be > 0, got ${deltaT}`);
  const n = events.t.length;
  if (n === 0) return [];
  const origin = t0 ?? events.t[0];
  if (origin > events.t[0]) {
    throw new Error(`t0=${origin} is after the first event at ${events.t[0]}`);
  }
  const bins: EventBin[] = [];
  let lo = 0;
  while (lo < n) {
    let idx = Math.floor((events.t[lo] - origin) / deltaT);
    if (events.t[lo] >= origin + (idx + 1) * deltaT) idx += 1;
    if (events.t[lo] < origin + idx * deltaT) idx -= 1;
    const end = origin + (idx + 1) * deltaT;
    let hi = lo;
    while (hi < n && events.t[hi] < end) hi++;
    bins.push({ index: idx, lo, hi, tStart: origin + idx * deltaT, tEnd: end });
    lo = hi;
  }
  return bins;
}

export function sliceByCount(events: EventArrays, count: number): EventBin[] {
  if (count < 1) throw new Error(`count must be >= 1, got ${count}`);
  const n = events.t.length;
  const bins: EventBin[] = [];
  for (let i = 0; i * count < n; i++) {
    const lo = i * count;
    const hi = Math.min((i + 1) * count, n);
    bins.push({ index: i, lo, hi, tStart: events.t[lo], tEnd: events.t[hi - 1] });
  }
  return bins;
}

export function sliceEvents(events: EventArrays, opts: BinningOptions): EventBin[] {
  if (opts.mode === "time") {
    if (opts.deltaT === undefined) throw new Error("time binning needs deltaT");
    return sliceByTime(events, opts.deltaT, opts.t0);
  }
  if (opts.count === undefined) throw new Error("count binning needs count");
  return sliceByCount(events, opts.count);
}
