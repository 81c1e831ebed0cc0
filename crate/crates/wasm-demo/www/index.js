import init, { normalize, compare, scan } from "./pkg/volcano_wasm.js";

const $ = (id) => document.getElementById(id);

const SAMPLE = `pragma solidity ^0.4.24;

contract Wallet {
    mapping(address => uint) balances;
    uint balance;

    function withdraw(uint amount) {
        if (balance >= amount)
        msg.sender.call.value(amount)();
        balance -= amount;
    }

    function destroy(address to) external {
        selfdestruct(to);
    }

    function deposit() public payable {
        balances[msg.sender] += msg.value;
    }
}
`;

const LEFT = `function externalSend(uint amountToSend) {
    if (balance >= amountToSend)
    msg.sender.call.value(amountToSend)();
    balance -= amountToSend;
}`;

const RIGHT = `function payOut(uint value_) {
    require(value_ > 0);
    if (funds >= value_)
    msg.sender.call.value(value_)();
    funds -= value_;
}`;

function escape(text) {
  return text.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
}

function showError(target, err) {
  target.innerHTML = `<pre>${escape(String(err.message ?? err))}</pre>`;
}

function runScan() {
  const out = $("scan-out");
  try {
    const report = JSON.parse(scan($("scan-src").value, $("scan-mode").value, Number($("scan-threshold").value)));
    if (report.detections.length === 0) {
      out.innerHTML = "<p>No detections.</p>";
      return;
    }
    const rows = report.detections.map((d) =>
      `<tr><td>${escape(d.function)}</td><td>lines ${d.start_line}-${d.end_line}</td>` +
      `<td>${d.vuln_type}</td><td>${escape(d.sig_id)}</td><td>${(d.similarity * 100).toFixed(1)}%</td></tr>`);
    out.innerHTML = `<table>${rows.join("")}</table>`;
  } catch (err) {
    showError(out, err);
  }
}

function runCompare() {
  const table = $("cmp-rows");
  try {
    const result = JSON.parse(compare($("cmp-left").value, $("cmp-right").value, $("cmp-mode").value));
    $("cmp-score").textContent = `similarity ${(result.similarity * 100).toFixed(1)}%`;
    table.innerHTML = result.rows
      .map((r) => `<tr class="${r.matched ? "" : "miss"}"><td>${escape(r.left ?? "")}</td><td>${escape(r.right ?? "")}</td></tr>`)
      .join("");
  } catch (err) {
    $("cmp-score").textContent = "";
    showError(table, err);
  }
}

function runNormalize() {
  try {
    const fragments = JSON.parse(normalize($("norm-src").value, $("norm-mode").value));
    $("norm-out").textContent = fragments
      .map((f) => `// ${f.function} (lines ${f.start_line}-${f.end_line})\n${f.lines.join("\n")}`)
      .join("\n\n");
  } catch (err) {
    $("norm-out").textContent = String(err.message ?? err);
  }
}

await init();
$("scan-src").value = SAMPLE;
$("norm-src").value = SAMPLE;
$("cmp-left").value = LEFT;
$("cmp-right").value = RIGHT;
$("scan-threshold").addEventListener("input", (e) => {
  $("scan-threshold-value").textContent = `${e.target.value}%`;
});
$("scan-run").addEventListener("click", runScan);
$("cmp-run").addEventListener("click", runCompare);
$("norm-run").addEventListener("click", runNormalize);
runScan();
runCompare();
runNormalize();
