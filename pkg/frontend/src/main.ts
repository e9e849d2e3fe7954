import { App } from "./app.js";
import { SessionClient } from "./client.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("server") ?? `${window.location.protocol}//${window.location.host}`;
const client = new SessionClient({ baseUrl: base });
const existing = params.get("session");
if (existing) client.attach(existing);

const root = document.getElementById("app")!;
const app = new App(client, root);
app.start(params.get("task") ?? "task-1").catch((err) => {
  root.textContent = `failed to connect: ${err}`;
});
