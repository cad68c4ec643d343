// Page wiring: session setup form, 1 s polling loop, keyboard labeling,
// and draft submission. All service calls go through ApiClient; every view
// update re-renders from the latest responses (see state.ts).

import { ApiClient, DatasetInfo } from "./api.js";
import {
    SessionView,
    applyResponses,
    draftsComplete,
    emptyView,
    focusOn,
    labelsBody,
    setDraft,
    withError,
} from "./state.js";
import { renderCurve, renderQueryCard, renderWeights } from "./render.js";

export interface AppOptions {
    pollMs?: number;
}

export interface App {
    start(): Promise<void>;
    stop(): void;
    tick(): Promise<void>;
    submit(): Promise<void>;
    handleKey(key: string): void;
    view(): SessionView | null;
}

function el<T extends HTMLElement>(doc: Document, id: string): T {
    const node = doc.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

export function createApp(doc: Document, api: ApiClient, options: AppOptions = {}): App {
    const pollMs = options.pollMs ?? 1000;
    const setup = el<HTMLElement>(doc, "setup");
    const datasetSelect = el<HTMLSelectElement>(doc, "dataset");
    const strategySelect = el<HTMLSelectElement>(doc, "strategy");
    const kernelSelect = el<HTMLSelectElement>(doc, "kernel");
    const budgetInput = el<HTMLInputElement>(doc, "budget");
    const startButton = el<HTMLButtonElement>(doc, "start");
    const sessionSection = el<HTMLElement>(doc, "session");
    const banner = el<HTMLElement>(doc, "banner");
    const progress = el<HTMLElement>(doc, "progress");
    const queriesBox = el<HTMLElement>(doc, "queries");
    const submitButton = el<HTMLButtonElement>(doc, "submit");
    const curveBox = el<HTMLElement>(doc, "curve-panel");
    const weightsBox = el<HTMLElement>(doc, "weights-panel");

    let view: SessionView | null = null;
    let timer: ReturnType<typeof setTimeout> | null = null;
    let inFlight = false;
    let stopped = false;

    function render(): void {
        if (!view) return;
        banner.hidden = view.error === null;
        banner.textContent = view.error ?? "";
        const state = view.state;
        if (state) {
            progress.textContent =
                `${state.dataset} | ${state.strategy}/${state.kernel} | ` +
                `${state.labeled_count}/${state.budget} labeled | round ${state.round}` +
                (state.done ? " | complete" : "");
            curveBox.replaceChildren(renderCurve(doc, state.learning_curve, state.budget));
            weightsBox.replaceChildren(renderWeights(doc, view.weightTrail));
        }
        const classNames = state?.class_names ?? [];
        const cards = (view.queries?.samples ?? []).map((sample) =>
            renderQueryCard(
                doc,
                sample,
                classNames,
                view!.drafts.get(sample.id),
                sample.id === view!.focusId,
            ),
        );
        queriesBox.replaceChildren(...cards);
        if (state?.done) {
            queriesBox.replaceChildren();
            submitButton.hidden = true;
        }
        submitButton.disabled = !draftsComplete(view);
    }

    async function tick(): Promise<void> {
        if (!view || inFlight) return;
        inFlight = true;
        try {
            const [queries, state] = await Promise.all([
                api.queries(view.sessionId),
                api.state(view.sessionId),
            ]);
            view = applyResponses(view, queries, state);
            if (state.done && timer !== null) {
                clearTimeout(timer);
                timer = null;
            }
        } catch (e) {
            view = withError(view, `service unreachable, retrying: ${e}`);
        } finally {
            inFlight = false;
        }
        render();
    }

    function schedule(): void {
        if (stopped || timer !== null) return;
        timer = setTimeout(async () => {
            timer = null;
            await tick();
            if (view && !view.state?.done) schedule();
        }, pollMs);
    }

    async function submit(): Promise<void> {
        if (!view || !draftsComplete(view)) return;
        submitButton.disabled = true;
        try {
            await api.postLabels(view.sessionId, labelsBody(view));
        } catch (e) {
            // drafts stay; the user retries once the banner clears
            view = withError(view, `labels not accepted, will retry: ${e}`);
            render();
            return;
        }
        await tick();
    }

    function handleKey(key: string): void {
        if (!view || view.focusId === null) return;
        if (!/^[0-9]$/.test(key)) return;
        view = setDraft(view, view.focusId, Number(key));
        render();
    }

    async function start(): Promise<void> {
        startButton.disabled = true;
        try {
            const created = await api.createSession({
                dataset: datasetSelect.value,
                strategy: strategySelect.value,
                kernel: kernelSelect.value,
                budget: Number(budgetInput.value),
            });
            view = emptyView(created.session_id);
            setup.hidden = true;
            sessionSection.hidden = false;
            await tick();
            schedule();
        } catch (e) {
            startButton.disabled = false;
            banner.hidden = false;
            banner.textContent = `could not create session: ${e}`;
        }
    }

    function stop(): void {
        stopped = true;
        if (timer !== null) clearTimeout(timer);
        timer = null;
    }

    async function loadRoster(): Promise<void> {
        const { datasets } = await api.listDatasets();
        datasetSelect.replaceChildren(
            ...datasets.map((d: DatasetInfo) => {
                const option = doc.createElement("option");
                option.value = d.name;
                option.textContent = `${d.name} (${d.n_samples} samples, ${d.n_classes} classes)`;
                return option;
            }),
        );
        startButton.disabled = datasets.length === 0;
    }

    startButton.addEventListener("click", () => void start());
    submitButton.addEventListener("click", () => void submit());
    doc.addEventListener("keydown", (event) => {
        const target = event.target as HTMLElement | null;
        if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) return;
        handleKey(event.key);
    });
    queriesBox.addEventListener("click", (event) => {
        if (!view) return;
        const target = event.target as HTMLElement;
        const card = target.closest<HTMLElement>(".query-card");
        if (!card) return;
        const sampleId = Number(card.dataset.sampleId);
        const button = target.closest<HTMLElement>("button[data-class-index]");
        if (button) {
            view = setDraft(view, sampleId, Number(button.dataset.classIndex));
        } else {
            view = focusOn(view, sampleId);
        }
        render();
    });

    void loadRoster().catch((e) => {
        banner.hidden = false;
        banner.textContent = `could not load datasets: ${e}`;
    });

    return { start, stop, tick, submit, handleKey, view: () => view };
}
