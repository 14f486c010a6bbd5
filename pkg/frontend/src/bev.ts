// BEV raster: the wire byte grid (one occupancy byte per cell) becomes RGBA
// directly; tracks and forecasts draw on top in world coordinates.

import type { BevSnapshot } from "./types.js";

export function decodeCells(b64: string, cellsX: number, cellsY: number): Uint8Array {
  const raw = atob(b64);
  if (raw.length !== cellsX * cellsY) {
    throw new Error(`grid payload ${raw.length} bytes, expected ${cellsX * cellsY}`);
  }
  const bytes = new Uint8Array(raw.length);
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i);
  return bytes;
}

// occupancy byte -> color: free space dark, unknown mid grey, occupied amber
export function cellColor(byte: number): [number, number, number] {
  if (byte > 166) {
    const t = (byte - 166) / 89;
    return [120 + Math.round(135 * t), 90 + Math.round(76 * t), 30];
  }
  if (byte < 90) {
    return [24, 34, 44];
  }
  return [52, 58, 66];
}

export function cellsToRgba(bytes: Uint8Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(bytes.length * 4);
  for (let i = 0; i < bytes.length; i++) {
    const [r, g, b] = cellColor(bytes[i]);
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

// world meters -> canvas pixels; row 0 of the grid is the lowest y, so the
// canvas (y-down) flips the row axis
export function worldToCanvas(
  x: number,
  y: number,
  bev: Pick<BevSnapshot, "cells_x" | "cells_y" | "resolution" | "origin">,
  scale: number,
): [number, number] {
  const lx = x - bev.origin.x;
  const ly = y - bev.origin.y;
  const col = bev.cells_x / 2 + lx / bev.resolution;
  const row = bev.cells_y / 2 + ly / bev.resolution;
  return [col * scale, (bev.cells_y - row) * scale];
}

export function drawBev(
  canvas: HTMLCanvasElement,
  bev: BevSnapshot,
  scale: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  canvas.width = bev.cells_x * scale;
  canvas.height = bev.cells_y * scale;

  const bytes = decodeCells(bev.cells_b64, bev.cells_x, bev.cells_y);
  const rgba = cellsToRgba(bytes);
  const image = new ImageData(new Uint8ClampedArray(rgba), bev.cells_x, bev.cells_y);
  const off = document.createElement("canvas");
  off.width = bev.cells_x;
  off.height = bev.cells_y;
  const offCtx = off.getContext("2d");
  if (!offCtx) return;
  offCtx.putImageData(image, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.save();
  ctx.scale(scale, -scale);
  ctx.drawImage(off, 0, -bev.cells_y);
  ctx.restore();

  for (const f of bev.forecasts) {
    ctx.strokeStyle = "rgba(110, 190, 255, 0.7)";
    ctx.lineWidth = 1;
    ctx.beginPath();
    f.points.forEach(([, x, y], i) => {
      const [cx, cy] = worldToCanvas(x, y, bev, scale);
      if (i === 0) ctx.moveTo(cx, cy);
      else ctx.lineTo(cx, cy);
    });
    ctx.stroke();
  }

  for (const d of bev.detections) {
    const [cx, cy] = worldToCanvas(d.x, d.y, bev, scale);
    ctx.save();
    ctx.translate(cx, cy);
    ctx.rotate(-d.yaw);
    ctx.strokeStyle = d.kind === "pedestrian" ? "#7ce38b" : "#e0e6ee";
    ctx.lineWidth = 1.2;
    ctx.strokeRect(
      (-d.length / 2 / bev.resolution) * scale,
      (-d.width / 2 / bev.resolution) * scale,
      (d.length / bev.resolution) * scale,
      (d.width / bev.resolution) * scale,
    );
    ctx.restore();
  }
}
