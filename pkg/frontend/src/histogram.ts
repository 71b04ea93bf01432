// Histogram math and rendering for sampling results.

export interface Bar {
  key: string;
  count: number;
  fraction: number;
}

/** Bars sorted by bitstring; heights are exactly count/shots. */
export function histogramBars(counts: Record<string, number>, shots: number): Bar[] {
  return Object.keys(counts)
    .sort()
    .map((key) => ({ key, count: counts[key], fraction: shots > 0 ? counts[key] / shots : 0 }));
}

export function renderHistogramSvg(bars: Bar[], width = 420, height = 220): string {
  if (bars.length === 0) return `<svg class="histogram" width="${width}" height="${height}"></svg>`;
  const pad = { top: 16, right: 12, bottom: 34, left: 44 };
  const plotW = width - pad.left - pad.right;
  const plotH = height - pad.top - pad.bottom;
  const maxFrac = Math.max(...bars.map((b) => b.fraction), 1e-12);
  const slot = plotW / bars.length;
  const barW = Math.min(slot * 0.7, 64);
  const parts: string[] = [];
  for (const frac of [0, 0.25, 0.5, 0.75, 1.0]) {
    if (frac > maxFrac * 1.05 && frac !== 0) continue;
    const y = pad.top + plotH * (1 - frac / Math.max(maxFrac, 1));
    parts.push(
      `<line x1="${pad.left}" y1="${y}" x2="${width - pad.right}" y2="${y}" class="grid"/>`,
      `<text x="${pad.left - 6}" y="${y + 4}" class="axis" text-anchor="end">${(frac * 100).toFixed(0)}%</text>`,
    );
  }
  bars.forEach((bar, i) => {
    const h = plotH * (bar.fraction / Math.max(maxFrac, 1));
    const x = pad.left + slot * i + (slot - barW) / 2;
    const y = pad.top + plotH - h;
    parts.push(
      `<rect x="${x.toFixed(1)}" y="${y.toFixed(1)}" width="${barW.toFixed(1)}" height="${h.toFixed(1)}" class="bar"/>`,
      `<text x="${(x + barW / 2).toFixed(1)}" y="${height - pad.bottom + 16}" class="axis" text-anchor="middle">${bar.key}</text>`,
      `<text x="${(x + barW / 2).toFixed(1)}" y="${(y - 4).toFixed(1)}" class="value" text-anchor="middle">${(bar.fraction * 100).toFixed(1)}%</text>`,
    );
  });
  return `<svg class="histogram" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">${parts.join("")}</svg>`;
}
