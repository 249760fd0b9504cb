mod common;

use ceiscan_pdg::build_icfg;
use ceiscan_symexec::*;
use common::*;

fn decide(m: &ceiscan_frontend::ContractModel) -> Vec<PptDecision> {
    let icfg = build_icfg(m);
    warnings(m).iter().map(|w| ppt_filter(m, &icfg, w)).collect()
}

const OWNED: &str = r#"
contract Owned {
    address owner;
    mapping(address => uint) bal;
    constructor() { owner = msg.sender; }
    function withdraw(address payable to) public {
        require(msg.sender == owner);
        uint a = bal[to];
        require(a > 0);
        to.call{value: a}("");
        bal[to] = 0;
    }
}
"#;

#[test]
fn owner_only_is_dropped() {
    assert_eq!(decide(&load_text(OWNED)), vec![PptDecision::Drop(DropReason::PermissionCheck)]);
}

#[test]
fn transferable_owner_is_kept() {
    let text = OWNED.replace("constructor() { owner = msg.sender; }", "function setOwner(address o) public { owner = o; }");
    assert_eq!(decide(&load_text(&text)), vec![PptDecision::Keep]);
}

#[test]
fn storage_mutex_is_dropped() {
    assert_eq!(decide(&load_text(MUTEX)), vec![PptDecision::Drop(DropReason::StorageMutex)]);
}

#[test]
fn guard_modifier_is_dropped() {
    let text = r#"
contract Guarded {
    mapping(address => uint) bal;
    uint private status = 1;
    modifier nonReentrant() {
        require(status == 1);
        status = 2;
        _;
        status = 1;
    }
    function withdraw() public nonReentrant {
        uint a = bal[msg.sender];
        require(a > 0);
        msg.sender.call{value: a}("");
        bal[msg.sender] = 0;
    }
}
"#;
    assert_eq!(decide(&load_text(text)), vec![PptDecision::Drop(DropReason::ReentrancyGuardModifier)]);
}

#[test]
fn cross_contract_and_unguarded_are_kept() {
    for f in ["cream_borrow.sol", "fig1_withdraw.sol", "fig8_withdraw_all.sol"] {
        let d = decide(&load(f));
        assert_eq!(d, vec![PptDecision::Keep], "{f}");
    }
}
