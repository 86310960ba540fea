import { ChatApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
const app = new ChatApp(root, "");
void app.connect();
