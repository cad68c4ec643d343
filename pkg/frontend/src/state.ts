// Session view model. The view is derived from the latest /queries and
// /state responses plus the local draft buffer; nothing else feeds it, so
// a page refresh rebuilds the identical view from the next poll. Drafts
// exist only until the round they belong to is acknowledged: a response
// for a newer round discards them. A label can never appear in the buffer
// without an explicit setDraft call, and setDraft rejects anything outside
// the class range.

import { QueriesResponse, StateResponse } from "./api.js";

export interface SessionView {
    sessionId: string;
    queries: QueriesResponse | null;
    state: StateResponse | null;
    drafts: ReadonlyMap<number, number>;
    focusId: number | null;
    weightTrail: [number, number, number][];
    error: string | null;
}

export function emptyView(sessionId: string): SessionView {
    return {
        sessionId,
        queries: null,
        state: null,
        drafts: new Map(),
        focusId: null,
        weightTrail: [],
        error: null,
    };
}

function pendingIds(queries: QueriesResponse | null): number[] {
    return queries ? queries.samples.map((s) => s.id) : [];
}

export function applyResponses(
    view: SessionView,
    queries: QueriesResponse,
    state: StateResponse,
): SessionView {
    const roundChanged = view.queries === null || view.queries.round !== queries.round;
    const drafts = roundChanged ? new Map<number, number>() : view.drafts;
    const ids = pendingIds(queries);
    let focusId = view.focusId;
    if (roundChanged || focusId === null || !ids.includes(focusId)) {
        focusId = ids.find((i) => !drafts.has(i)) ?? ids[0] ?? null;
    }
    const weightTrail = trailWith(view.weightTrail, state);
    return { ...view, queries, state, drafts, focusId, weightTrail, error: null };
}

// one trail entry per service round; re-polling the same round must not
// grow the trail
function trailWith(
    trail: [number, number, number][],
    state: StateResponse,
): [number, number, number][] {
    const next = trail.slice(0, state.round + 1);
    next[state.round] = [...state.weights_4ds];
    return next;
}

export function setDraft(
    view: SessionView,
    sampleId: number,
    classIndex: number,
): SessionView {
    const nClasses = view.state?.class_names.length ?? 0;
    if (!Number.isInteger(classIndex) || classIndex < 0 || classIndex >= nClasses) {
        return view; // out-of-range input is blocked, not clamped
    }
    if (!pendingIds(view.queries).includes(sampleId)) {
        return view;
    }
    const drafts = new Map(view.drafts);
    drafts.set(sampleId, classIndex);
    return { ...view, drafts, focusId: nextUnlabeled(view, drafts, sampleId) };
}

function nextUnlabeled(
    view: SessionView,
    drafts: ReadonlyMap<number, number>,
    after: number,
): number | null {
    const ids = pendingIds(view.queries);
    const start = ids.indexOf(after);
    for (let step = 1; step <= ids.length; step++) {
        const id = ids[(start + step) % ids.length];
        if (!drafts.has(id)) return id;
    }
    return after; // everything drafted: keep focus where it was
}

export function focusOn(view: SessionView, sampleId: number): SessionView {
    if (!pendingIds(view.queries).includes(sampleId)) return view;
    return { ...view, focusId: sampleId };
}

export function draftsComplete(view: SessionView): boolean {
    const ids = pendingIds(view.queries);
    return ids.length > 0 && ids.every((i) => view.drafts.has(i));
}

export function labelsBody(view: SessionView): Record<number, number> {
    const body: Record<number, number> = {};
    for (const [id, label] of view.drafts) body[id] = label;
    return body;
}

export function withError(view: SessionView, message: string): SessionView {
    // network failures keep the drafts; only the banner changes
    return { ...view, error: message };
}
