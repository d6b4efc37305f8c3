/** Small element builders so views stay readable without a framework. */

type Attrs = Record<string, string | boolean | EventListener>;

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Attrs = {},
  ...children: (Node | string | null | undefined)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (typeof value === "function") {
      node.addEventListener(key.replace(/^on/, ""), value);
    } else if (typeof value === "boolean") {
      if (value) node.setAttribute(key, "");
      else node.removeAttribute(key);
      if (key === "disabled" || key === "checked" || key === "hidden") {
        (node as unknown as Record<string, boolean>)[key] = value;
      }
    } else {
      node.setAttribute(key, value);
      if (key === "value" && "value" in node) {
        (node as unknown as { value: string }).value = value;
      }
    }
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    node.append(child instanceof Node ? child : document.createTextNode(child));
  }
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function textCell(text: string, className?: string): HTMLTableCellElement {
  const cell = document.createElement("td");
  cell.textContent = text;
  if (className) cell.className = className;
  return cell;
}

/** A dismissible line for surfaced error codes; views reuse one per screen. */
export function errorBox(): { node: HTMLElement; show: (text: string) => void; hide: () => void } {
  const node = el("div", { class: "error-box", hidden: true });
  return {
    node,
    show(text: string) {
      node.textContent = text;
      node.hidden = false;
    },
    hide() {
      node.hidden = true;
    },
  };
}

/** CSS modifier derived from a status-ish string, for color coding. */
export function statusClass(status: string): string {
  const normalized = status.toLowerCase().replace(/[^a-z]+/g, "-");
  return `status-${normalized}`;
}
