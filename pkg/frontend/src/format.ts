/** Display formatting shared by the dashboard tables. */

export function todayString(now: Date = new Date()): string {
  const month = String(now.getMonth() + 1).padStart(2, "0");
  const day = String(now.getDate()).padStart(2, "0");
  return `${now.getFullYear()}-${month}-${day}`;
}

export function elapsedText(seconds: number): string {
  if (seconds < 60) return `${seconds}s`;
  const minutes = Math.floor(seconds / 60);
  return `${minutes}m ${seconds % 60}s`;
}

export function progressText(progress: number): string {
  return `${Math.round(progress * 10) / 10}%`;
}

export function fileGlyph(name: string, isDir: boolean): string {
  if (isDir) return "[dir]";
  const dot = name.lastIndexOf(".");
  return dot > 0 ? `[${name.slice(dot + 1).toLowerCase()}]` : "[file]";
}
