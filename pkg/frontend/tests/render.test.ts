import { describe, expect, it } from "vitest";

import { QuerySample } from "../src/api.js";
import {
    classColor,
    renderCurve,
    renderQueryCard,
    renderSampleBody,
    renderWeights,
} from "../src/render.js";

function sampleWith(kind: string, payload: unknown): QuerySample {
    return { id: 42, features: [], render: { kind, payload } };
}

describe("scatter rendering", () => {
    const payload = {
        point: [0.5, 0.5],
        pool: [[0, 0], [1, 1], [0.2, 0.8]],
        labeled: [
            { xy: [0.1, 0.1], label: 0 },
            { xy: [0.9, 0.9], label: 1 },
            { xy: [0.4, 0.6], label: 2 },
        ],
    };

    it("shows pool context, one color per class, and a highlighted query", () => {
        const svg = renderSampleBody(document, sampleWith("scatter2d", payload));
        expect(svg.tagName.toLowerCase()).toBe("svg");
        expect(svg.querySelectorAll(".pool-point")).toHaveLength(3);
        const labeled = [...svg.querySelectorAll(".labeled-point")];
        const colors = new Set(labeled.map((c) => c.getAttribute("fill")));
        expect(colors).toEqual(new Set([classColor(0), classColor(1), classColor(2)]));
        expect(svg.querySelectorAll(".query-point")).toHaveLength(1);
    });
});

describe("image rendering", () => {
    it("renders the pixel grid at its stated size", () => {
        const payload = { width: 2, height: 2, pixels: [0, 255, 128, 64] };
        const svg = renderSampleBody(document, sampleWith("image", payload));
        expect(svg.tagName.toLowerCase()).toBe("svg");
        expect(svg.getAttribute("viewBox")).toBe("0 0 2 2");
        // zero pixels are skipped, the three ink pixels are drawn
        expect(svg.querySelectorAll("rect")).toHaveLength(3);
    });
});

describe("table rendering", () => {
    it("lists attribute name/value pairs", () => {
        const payload = { rows: [["area", 15.26], ["variety_hint", "wide"]] };
        const table = renderSampleBody(document, sampleWith("table", payload));
        expect(table.tagName.toLowerCase()).toBe("table");
        const cells = [...table.querySelectorAll("th")].map((th) => th.textContent);
        expect(cells).toEqual(["area", "variety_hint"]);
    });
});

describe("fallback rendering", () => {
    it("shows raw JSON for an unknown kind without throwing", () => {
        const element = renderSampleBody(document, sampleWith("hologram", { a: 1 }));
        expect(element.classList.contains("fallback")).toBe(true);
        expect(element.textContent).toContain('"a": 1');
    });

    it("falls back when a known kind carries a malformed payload", () => {
        const element = renderSampleBody(
            document, sampleWith("image", { width: 2, height: 2, pixels: [1] }),
        );
        expect(element.classList.contains("fallback")).toBe(true);
    });

    it("survives a missing render spec", () => {
        const sample = { id: 1, features: [], render: null } as unknown as QuerySample;
        const element = renderSampleBody(document, sample);
        expect(element.classList.contains("fallback")).toBe(true);
    });
});

describe("query cards", () => {
    const sample = sampleWith("table", { rows: [["a", 1]] });

    it("offers one button per class and marks the drafted one", () => {
        const card = renderQueryCard(document, sample, ["c0", "c1", "c2"], 1, false);
        const buttons = [...card.querySelectorAll("button[data-class-index]")];
        expect(buttons).toHaveLength(3);
        expect(buttons[1].classList.contains("chosen")).toBe(true);
        expect(card.dataset.sampleId).toBe("42");
    });

    it("marks the focused card", () => {
        const card = renderQueryCard(document, sample, ["c0"], undefined, true);
        expect(card.classList.contains("focused")).toBe(true);
    });
});

describe("panels", () => {
    it("plots the learning curve over the budget axis", () => {
        const curve = [
            { n: 8, test_acc: 0.6 },
            { n: 13, test_acc: 0.8 },
            { n: 18, test_acc: 0.9 },
        ];
        const svg = renderCurve(document, curve, 20);
        const line = svg.querySelector("polyline");
        expect(line).not.toBeNull();
        expect(line!.getAttribute("points")!.split(" ")).toHaveLength(3);
        expect(svg.textContent).toContain("90.0% @ 18");
    });

    it("renders an empty curve as axes only", () => {
        const svg = renderCurve(document, [], 20);
        expect(svg.querySelector("polyline")).toBeNull();
        expect(svg.querySelectorAll("line")).toHaveLength(2);
    });

    it("draws one trajectory per selection weight", () => {
        const svg = renderWeights(document, [[1, 1, 1], [0.9, 1.05, 1.05]]);
        const lines = [...svg.querySelectorAll("polyline")];
        expect(lines.map((l) => l.getAttribute("data-weight"))).toEqual(
            ["distance", "density", "distribution"],
        );
    });
});
