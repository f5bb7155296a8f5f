/** UI state and its pure transitions (kept separate for direct testing). */

import type { CoverageReport } from "./api.js";

export interface UiState {
  selectedId: string | null;
  threshold: number; // 0..10, step 0.1
  lastReport: CoverageReport | null;
  overlayVisible: boolean;
  requestInFlight: boolean;
  banner: string | null;
}

export function initialState(): UiState {
  return {
    selectedId: null,
    threshold: 5,
    lastReport: null,
    overlayVisible: true,
    requestInFlight: false,
    banner: null,
  };
}

/** Selecting an image always clears the previous image's stale report. */
export function withImageSelected(state: UiState, id: string): UiState {
  return { ...state, selectedId: id, lastReport: null, banner: null };
}

export function withReport(state: UiState, report: CoverageReport): UiState {
  return { ...state, lastReport: report, banner: null };
}

/** Failed requests keep the previous report visible and raise a banner. */
export function withError(state: UiState, message: string): UiState {
  return { ...state, banner: message };
}
