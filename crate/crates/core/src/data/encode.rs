//! Categorical vocabulary, one-hot feature encoding and label binarization.

use super::records::{RecordSet, NUMERIC_FEATURES};
use super::{FeatureMatrix, LabelVector};

const PROTOCOLS: [&str; 3] = ["tcp", "udp", "icmp"];

const SERVICES: [&str; 70] = [
    "aol", "auth", "bgp", "courier", "csnet_ns", "ctf", "daytime", "discard", "domain",
    "domain_u", "echo", "eco_i", "ecr_i", "efs", "exec", "finger", "ftp", "ftp_data", "gopher",
    "harvest", "hostnames", "http", "http_2784", "http_443", "http_8001", "imap4", "IRC",
    "iso_tsap", "klogin", "kshell", "ldap", "link", "login", "mtp", "name", "netbios_dgm",
    "netbios_ns", "netbios_ssn", "netstat", "nnsp", "nntp", "ntp_u", "other", "pm_dump", "pop_2",
    "pop_3", "printer", "private", "red_i", "remote_job", "rje", "shell", "smtp", "sql_net", "ssh",
    "sunrpc", "supdup", "systat", "telnet", "tftp_u", "tim_i", "time", "urh_i", "urp_i", "uucp",
    "uucp_path", "vmnet", "whois", "X11", "Z39_50",
];

const FLAGS: [&str; 11] = [
    "OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH",
];

/// Ordered token lists for the three categorical columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryVocab {
    pub protocols: Vec<String>,
    pub services: Vec<String>,
    pub flags: Vec<String>,
}

impl CategoryVocab {
    /// The fixed NSL-KDD vocabulary: 3 protocols, 70 services, 11 flags.
    pub fn nsl_kdd() -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        CategoryVocab {
            protocols: own(&PROTOCOLS),
            services: own(&SERVICES),
            flags: own(&FLAGS),
        }
    }

    /// Width of the encoded feature vector.
    pub fn encoded_width(&self) -> usize {
        NUMERIC_FEATURES + self.protocols.len() + self.services.len() + self.flags.len()
    }
}

impl Default for CategoryVocab {
    fn default() -> Self {
        Self::nsl_kdd()
    }
}

fn one_hot(row: &mut [f64], vocab: &[String], token: &str) {
    if let Some(pos) = vocab.iter().position(|t| t == token) {
        row[pos] = 1.0;
    }
}

/// Numeric columns pass through in file order, followed by one-hot blocks
/// for protocol, service and flag. Tokens missing from `vocab` encode as an
/// all-zero block.
pub fn encode_features(records: &RecordSet, vocab: &CategoryVocab) -> FeatureMatrix {
    let n_cols = vocab.encoded_width();
    let mut data = vec![0.0; records.len() * n_cols];
    let p_off = NUMERIC_FEATURES;
    let s_off = p_off + vocab.protocols.len();
    let f_off = s_off + vocab.services.len();
    for (r, row) in records.rows.iter().zip(data.chunks_exact_mut(n_cols)) {
        row[..NUMERIC_FEATURES].copy_from_slice(&r.numeric);
        one_hot(&mut row[p_off..s_off], &vocab.protocols, &r.protocol);
        one_hot(&mut row[s_off..f_off], &vocab.services, &r.service);
        one_hot(&mut row[f_off..], &vocab.flags, &r.flag);
    }
    FeatureMatrix::from_vec(records.len(), n_cols, data)
        .expect("encoded rows have uniform width")
}

/// "normal" maps to 0, every attack label to 1.
pub fn binarize_labels(records: &RecordSet) -> LabelVector {
    LabelVector::new(
        records
            .rows
            .iter()
            .map(|r| u8::from(!r.is_normal()))
            .collect(),
    )
}
