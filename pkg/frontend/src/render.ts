// Pure DOM builders: each function maps a payload to a detached element.
// Rendering is SVG throughout. An unknown or malformed payload falls back
// to its raw JSON instead of throwing; a bad sample must never take the
// page down mid-session.

import { CurvePoint, ImagePayload, QuerySample, ScatterPayload, TablePayload } from "./api.js";

export const CLASS_COLORS = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

export function classColor(index: number): string {
    return CLASS_COLORS[index % CLASS_COLORS.length];
}

const SVG_NS = "http://www.w3.org/2000/svg";

function svgElement(
    doc: Document,
    tag: string,
    attrs: Record<string, string>,
): SVGElement {
    const el = doc.createElementNS(SVG_NS, tag) as SVGElement;
    for (const [k, v] of Object.entries(attrs)) el.setAttribute(k, v);
    return el;
}

interface Bounds {
    xMin: number;
    xMax: number;
    yMin: number;
    yMax: number;
}

function boundsOf(points: number[][]): Bounds {
    let xMin = Infinity, xMax = -Infinity, yMin = Infinity, yMax = -Infinity;
    for (const [x, y] of points) {
        xMin = Math.min(xMin, x);
        xMax = Math.max(xMax, x);
        yMin = Math.min(yMin, y);
        yMax = Math.max(yMax, y);
    }
    if (!isFinite(xMin)) return { xMin: 0, xMax: 1, yMin: 0, yMax: 1 };
    if (xMin === xMax) { xMin -= 0.5; xMax += 0.5; }
    if (yMin === yMax) { yMin -= 0.5; yMax += 0.5; }
    return { xMin, xMax, yMin, yMax };
}

function scaler(b: Bounds, size: number, pad: number) {
    const sx = (size - 2 * pad) / (b.xMax - b.xMin);
    const sy = (size - 2 * pad) / (b.yMax - b.yMin);
    return {
        // y flipped: SVG grows downward
        x: (v: number) => pad + (v - b.xMin) * sx,
        y: (v: number) => size - pad - (v - b.yMin) * sy,
    };
}

function isScatterPayload(p: unknown): p is ScatterPayload {
    const q = p as ScatterPayload;
    return (
        !!q && Array.isArray(q.point) && q.point.length >= 2 &&
        Array.isArray(q.pool) && Array.isArray(q.labeled)
    );
}

export function renderScatter(doc: Document, payload: ScatterPayload): SVGElement {
    const size = 260;
    const all = [payload.point, ...payload.pool, ...payload.labeled.map((l) => l.xy)];
    const s = scaler(boundsOf(all), size, 14);
    const svg = svgElement(doc, "svg", {
        viewBox: `0 0 ${size} ${size}`,
        class: "scatter",
        role: "img",
    });
    for (const [x, y] of payload.pool) {
        svg.appendChild(svgElement(doc, "circle", {
            cx: String(s.x(x)), cy: String(s.y(y)), r: "2.5", fill: "#c8c8c8",
            class: "pool-point",
        }));
    }
    for (const { xy, label } of payload.labeled) {
        svg.appendChild(svgElement(doc, "circle", {
            cx: String(s.x(xy[0])), cy: String(s.y(xy[1])), r: "3.5",
            fill: classColor(label), class: "labeled-point",
        }));
    }
    const [qx, qy] = payload.point;
    svg.appendChild(svgElement(doc, "circle", {
        cx: String(s.x(qx)), cy: String(s.y(qy)), r: "7",
        fill: "none", stroke: "#000", "stroke-width": "2", class: "query-point",
    }));
    return svg;
}

function isImagePayload(p: unknown): p is ImagePayload {
    const q = p as ImagePayload;
    return (
        !!q && Number.isInteger(q.width) && Number.isInteger(q.height) &&
        Array.isArray(q.pixels) && q.pixels.length === q.width * q.height
    );
}

export function renderImage(doc: Document, payload: ImagePayload): SVGElement {
    const { width, height, pixels } = payload;
    const svg = svgElement(doc, "svg", {
        viewBox: `0 0 ${width} ${height}`,
        class: "digit",
        role: "img",
        width: "140",
        height: "140",
    });
    for (let r = 0; r < height; r++) {
        for (let c = 0; c < width; c++) {
            const v = pixels[r * width + c];
            if (v <= 0) continue; // background stays the page color
            const g = 255 - Math.max(0, Math.min(255, Math.round(v)));
            svg.appendChild(svgElement(doc, "rect", {
                x: String(c), y: String(r), width: "1", height: "1",
                fill: `rgb(${g},${g},${g})`,
            }));
        }
    }
    return svg;
}

function isTablePayload(p: unknown): p is TablePayload {
    const q = p as TablePayload;
    return !!q && Array.isArray(q.rows) && q.rows.every((r) => Array.isArray(r) && r.length === 2);
}

export function renderTable(doc: Document, payload: TablePayload): HTMLElement {
    const table = doc.createElement("table");
    table.className = "attributes";
    for (const [name, value] of payload.rows) {
        const tr = doc.createElement("tr");
        const th = doc.createElement("th");
        th.textContent = String(name);
        const td = doc.createElement("td");
        td.textContent = typeof value === "number" ? value.toPrecision(5) : String(value);
        tr.append(th, td);
        table.appendChild(tr);
    }
    return table;
}

export function renderFallback(doc: Document, payload: unknown): HTMLElement {
    const pre = doc.createElement("pre");
    pre.className = "fallback";
    try {
        pre.textContent = JSON.stringify(payload, null, 2);
    } catch {
        pre.textContent = String(payload);
    }
    return pre;
}

export function renderSampleBody(doc: Document, sample: QuerySample): Element {
    const { kind, payload } = sample.render ?? { kind: "?", payload: null };
    if (kind === "scatter2d" && isScatterPayload(payload)) return renderScatter(doc, payload);
    if (kind === "image" && isImagePayload(payload)) return renderImage(doc, payload);
    if (kind === "table" && isTablePayload(payload)) return renderTable(doc, payload);
    return renderFallback(doc, payload);
}

export function renderQueryCard(
    doc: Document,
    sample: QuerySample,
    classNames: string[],
    draft: number | undefined,
    focused: boolean,
): HTMLElement {
    const card = doc.createElement("div");
    card.className = focused ? "query-card focused" : "query-card";
    card.dataset.sampleId = String(sample.id);
    const head = doc.createElement("div");
    head.className = "query-head";
    head.textContent = `sample ${sample.id}`;
    card.appendChild(head);
    card.appendChild(renderSampleBody(doc, sample));
    const buttons = doc.createElement("div");
    buttons.className = "class-buttons";
    classNames.forEach((name, index) => {
        const button = doc.createElement("button");
        button.type = "button";
        button.dataset.classIndex = String(index);
        button.textContent = `${index}: ${name}`;
        button.style.borderColor = classColor(index);
        if (draft === index) button.classList.add("chosen");
        buttons.appendChild(button);
    });
    card.appendChild(buttons);
    return card;
}

export function renderCurve(doc: Document, curve: CurvePoint[], budget: number): SVGElement {
    const width = 320, height = 160, pad = 22;
    const svg = svgElement(doc, "svg", {
        viewBox: `0 0 ${width} ${height}`,
        class: "curve",
        role: "img",
    });
    svg.appendChild(svgElement(doc, "line", {
        x1: String(pad), y1: String(height - pad),
        x2: String(width - pad), y2: String(height - pad),
        stroke: "#999",
    }));
    svg.appendChild(svgElement(doc, "line", {
        x1: String(pad), y1: String(pad), x2: String(pad), y2: String(height - pad),
        stroke: "#999",
    }));
    if (!curve.length) return svg;
    const nMax = Math.max(budget, ...curve.map((p) => p.n));
    const sx = (n: number) => pad + (n / nMax) * (width - 2 * pad);
    const sy = (a: number) => height - pad - a * (height - 2 * pad);
    const points = curve.map((p) => `${sx(p.n).toFixed(1)},${sy(p.test_acc).toFixed(1)}`);
    svg.appendChild(svgElement(doc, "polyline", {
        points: points.join(" "),
        fill: "none",
        stroke: "#1f77b4",
        "stroke-width": "2",
    }));
    const lastPoint = curve[curve.length - 1];
    svg.appendChild(svgElement(doc, "text", {
        x: String(width - pad), y: String(pad - 6), "text-anchor": "end",
        class: "curve-label",
    })).textContent = `${(lastPoint.test_acc * 100).toFixed(1)}% @ ${lastPoint.n}`;
    return svg;
}

const WEIGHT_NAMES = ["distance", "density", "distribution"];

export function renderWeights(
    doc: Document,
    trail: [number, number, number][],
): SVGElement {
    const width = 320, height = 120, pad = 22;
    const svg = svgElement(doc, "svg", {
        viewBox: `0 0 ${width} ${height}`,
        class: "weights",
        role: "img",
    });
    if (!trail.length) return svg;
    const sx = (r: number) =>
        trail.length === 1 ? width / 2 : pad + (r / (trail.length - 1)) * (width - 2 * pad);
    const sy = (w: number) => height - pad - w * (height - 2 * pad);
    for (let k = 0; k < 3; k++) {
        const points = trail.map((w, r) => `${sx(r).toFixed(1)},${sy(w[k]).toFixed(1)}`);
        svg.appendChild(svgElement(doc, "polyline", {
            points: points.join(" "),
            fill: "none",
            stroke: classColor(k),
            "stroke-width": "1.5",
            "data-weight": WEIGHT_NAMES[k],
        }));
    }
    return svg;
}
