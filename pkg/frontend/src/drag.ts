/** Freeform canvas dragging (absolute positions, no auto-layout). */

export interface DragEnd {
  x: number;
  y: number;
}

export function makeDraggable(
  element: HTMLElement,
  onDrop: (end: DragEnd) => void,
): void {
  let startX = 0;
  let startY = 0;
  let originX = 0;
  let originY = 0;
  let dragging = false;

  const onMove = (ev: MouseEvent) => {
    if (!dragging) return;
    const x = originX + (ev.clientX - startX);
    const y = originY + (ev.clientY - startY);
    element.style.left = `${x}px`;
    element.style.top = `${y}px`;
  };

  const onUp = () => {
    if (!dragging) return;
    dragging = false;
    element.ownerDocument.removeEventListener("mousemove", onMove);
    element.ownerDocument.removeEventListener("mouseup", onUp);
    onDrop({ x: parseFloat(element.style.left), y: parseFloat(element.style.top) });
  };

  element.addEventListener("mousedown", (ev) => {
    if ((ev.target as HTMLElement).tagName === "BUTTON") return;
    dragging = true;
    startX = ev.clientX;
    startY = ev.clientY;
    originX = parseFloat(element.style.left || "0");
    originY = parseFloat(element.style.top || "0");
    element.ownerDocument.addEventListener("mousemove", onMove);
    element.ownerDocument.addEventListener("mouseup", onUp);
    ev.preventDefault();
  });
}
