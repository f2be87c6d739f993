//! Minimal HTML forms for browser clients.

use std::fmt::Write;

use helios_core::{Channel, Counts, RgbSetting};

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{title}</title>\n\
         <style>body{{font-family:sans-serif;margin:2em}}table{{border-collapse:collapse}}\
         td,th{{border:1px solid #999;padding:.2em .6em;text-align:right}}</style>\n\
         </head>\n<body>\n<h1>{title}</h1>\n{body}</body>\n</html>\n"
    )
}

fn slider(name: &str, value: f64) -> String {
    format!(
        "<label>{name} <input type=\"number\" name=\"{name}\" min=\"0\" max=\"1\" step=\"0.01\" value=\"{value}\"></label>\n"
    )
}

pub fn green_machine(setting: RgbSetting, count: Option<u16>) -> String {
    let mut body = String::from("<form method=\"get\" action=\"/gm\">\n");
    body += &slider("G", setting.g());
    body += "<button type=\"submit\">Measure</button>\n</form>\n";
    if let Some(c) = count {
        let _ = writeln!(body, "<p>515nm: <output id=\"w515\">{c}</output></p>");
    }
    page("Green Machine", &body)
}

pub fn rgb_machine(setting: RgbSetting, counts: Option<&Counts>) -> String {
    let mut body = String::from("<form method=\"get\" action=\"/rgb\">\n");
    for (name, v) in ["R", "G", "B"].iter().zip(setting.as_array()) {
        body += &slider(name, v);
    }
    body += "<button type=\"submit\">Measure</button>\n</form>\n";
    if let Some(counts) = counts {
        body += "<table>\n<tr><th>channel</th><th>count</th></tr>\n";
        for ch in Channel::ALL {
            let _ = writeln!(body, "<tr><td>{ch}</td><td>{}</td></tr>", counts.get(ch));
        }
        body += "</table>\n";
    }
    page("RGB Machine", &body)
}

pub fn error(status: u16, message: &str) -> String {
    page(&format!("Error {status}"), &format!("<p>{}</p>\n", escape(message)))
}

pub fn index() -> String {
    page(
        "Photometer",
        "<ul>\n<li><a href=\"/gm\">Green Machine</a></li>\n<li><a href=\"/rgb\">RGB Machine</a></li>\n\
         <li><a href=\"/stats\">Usage statistics</a></li>\n</ul>\n",
    )
}
