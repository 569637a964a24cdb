//! Human-readable output for the read verbs.
//!
//! Every verb fetches JSON from the endpoints; `--json` prints it verbatim
//! (pretty-printed), these helpers turn it into aligned tables otherwise.

use serde_json::Value;

/// Left-aligned columns with a two-space gutter; no trailing spaces.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[String]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            if i + 1 == cells.len() {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<width$}", width = widths[i]));
            }
        }
        line.trim_end().to_owned()
    };

    let mut out = render_row(&headers.iter().map(|h| (*h).to_owned()).collect::<Vec<_>>());
    out.push('\n');
    for row in rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}

pub fn json_pretty(value: &Value) -> String {
    serde_json::to_string_pretty(value).expect("JSON values always serialize")
}

fn text(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn pops_table(pops: &[Value]) -> String {
    let rows: Vec<Vec<String>> = pops
        .iter()
        .map(|p| {
            let ledger = &p["ledger"];
            let endpoint = match (&p["endpoint"]["bind"], &p["endpoint"]["port"]) {
                (Value::String(bind), Value::Number(port)) => format!("{bind}:{port}"),
                _ => "-".to_owned(),
            };
            vec![
                text(&p["name"]),
                text(&p["model"]),
                text(&p["instance_count"]),
                format!(
                    "{}/{} CU",
                    text(&ledger["cpu_allocated_cus"]),
                    text(&ledger["cpu_capacity_cus"])
                ),
                format!(
                    "{}/{} MB",
                    text(&ledger["mem_allocated_mb"]),
                    text(&ledger["mem_capacity_mb"])
                ),
                endpoint,
            ]
        })
        .collect();
    table(
        &["POP", "MODEL", "INSTANCES", "CPU", "MEMORY", "ENDPOINT"],
        &rows,
    )
}

pub fn instances_table(instances: &[Value]) -> String {
    let rows: Vec<Vec<String>> = instances
        .iter()
        .map(|i| {
            vec![
                text(&i["id"]),
                text(&i["pop"]),
                text(&i["image"]),
                text(&i["request"]["cpu_cus"]),
                text(&i["cpu_fraction"]),
                text(&i["demand"]),
                format!("{}s", text(&i["created_at"])),
            ]
        })
        .collect();
    table(
        &["ID", "POP", "IMAGE", "CUS", "LIMIT", "DEMAND", "CREATED"],
        &rows,
    )
}

pub fn chains_table(chains: &[Value]) -> String {
    let rows: Vec<Vec<String>> = chains
        .iter()
        .map(|c| {
            let hops = c["hops"]
                .as_array()
                .map(|hops| {
                    hops.iter()
                        .map(text)
                        .collect::<Vec<_>>()
                        .join(" -> ")
                })
                .unwrap_or_default();
            vec![
                text(&c["id"]),
                text(&c["vlan_tag"]),
                text(&c["metric"]),
                hops,
            ]
        })
        .collect();
    table(&["ID", "VLAN", "METRIC", "HOPS"], &rows)
}

pub fn platform_stats_lines(stats: &Value) -> String {
    let mut out = String::new();
    out.push_str(&format!("clock: {}s\n", text(&stats["clock_s"])));
    out.push_str(&format!(
        "cpu budget: {} of each physical CPU\n",
        text(&stats["cpu_budget"])
    ));
    out.push_str(&format!(
        "pool: {}/{} CU allocated\n",
        text(&stats["pool_allocated_cus"]),
        text(&stats["total_capacity_cus"])
    ));
    out.push_str(&format!(
        "instances: {}  chains: {}  stacks: {}\n",
        text(&stats["instance_count"]),
        text(&stats["chain_count"]),
        text(&stats["stack_count"])
    ));
    if let Some(pops) = stats["pops"].as_object() {
        let rows: Vec<Vec<String>> = pops
            .iter()
            .map(|(name, p)| {
                vec![
                    name.clone(),
                    text(&p["model_kind"]),
                    text(&p["instance_count"]),
                    format!(
                        "{}/{} CU",
                        text(&p["ledger"]["cpu_allocated_cus"]),
                        text(&p["ledger"]["cpu_capacity_cus"])
                    ),
                    text(&p["cpu_fraction_total"]),
                    text(&p["aggregate_usage"]),
                ]
            })
            .collect();
        out.push_str(&table(
            &["POP", "MODEL", "INSTANCES", "CPU", "LIMIT_TOTAL", "USAGE"],
            &rows,
        ));
    }
    out
}

pub fn instance_stats_lines(stats: &Value) -> String {
    let mut out = String::new();
    out.push_str(&format!("instance: {}\n", text(&stats["id"])));
    out.push_str(&format!("pop: {}\n", text(&stats["pop"])));
    out.push_str(&format!("limit: {}\n", text(&stats["cpu_fraction"])));
    out.push_str(&format!("demand: {}\n", text(&stats["demand"])));
    out.push_str(&format!(
        "current usage: {}\n",
        text(&stats["current_usage"])
    ));
    out.push_str(&format!(
        "pop aggregate usage: {}\n",
        text(&stats["pop_aggregate_usage"])
    ));
    if let Some(samples) = stats["samples"].as_array() {
        let recent: Vec<String> = samples
            .iter()
            .rev()
            .take(5)
            .rev()
            .map(|s| format!("t={}s usage={}", text(&s["t_s"]), text(&s["usage"])))
            .collect();
        if !recent.is_empty() {
            out.push_str(&format!("recent samples: {}\n", recent.join(", ")));
        }
    }
    out
}

pub fn traffic_lines(report: &Value) -> String {
    format!(
        "chain: {}\nhops: {}\nend-to-end delay: {} ms\nbottleneck: {} mbit/s\ndelivery probability: {}\npayload: {} mbit\ntransfer time: {} ms\n",
        text(&report["chain"]),
        text(&report["hop_count"]),
        text(&report["end_to_end_delay_ms"]),
        text(&report["bottleneck_bandwidth_mbps"]),
        text(&report["delivery_probability"]),
        text(&report["payload_mbits"]),
        text(&report["transfer_time_ms"]),
    )
}
